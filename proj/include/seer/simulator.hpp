#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "seer/common.hpp"
#include "seer/topology.hpp"
#include "seer/tracing.hpp"

namespace seer::sim {

// --- load -------------------------------------------------------------------

enum class LoadKind { Constant, Diurnal, Spike };

struct LoadPattern {
    LoadKind kind = LoadKind::Constant;
    double base_rate = 100.0; // requests/s
    // diurnal
    double amplitude = 0.0;
    double period_ms = 86400000.0;
    // spike
    double spike_rate = 0.0;
    double spike_start_ms = 0.0;
    double spike_duration_ms = 0.0;

    std::string validate() const; // empty = ok
};

// Instantaneous request rate of the pattern, requests/s.
double arrival_rate(const LoadPattern& load, double t_ms);

// --- faults -----------------------------------------------------------------

enum class FaultCategory {
    AppDeadlock,
    AppBlocking,
    AppCyclic,
    PacketDropRule,
    CpuContention,
    CacheContention,
    MemoryContention,
    NetworkContention,
    DiskContention,
    LoadSpike,
    SwitchFailure,
};

std::string_view fault_category_name(FaultCategory c);
FaultCategory fault_category_from_name(std::string_view s);

// Whether the category targets a node id (true) or a microservice id (false).
bool fault_targets_node(FaultCategory c);
// Resource the contention categories press on; nullopt for the others.
std::optional<Resource> fault_resource(FaultCategory c);
// Application-level bugs (cannot be mitigated by resource actions).
bool fault_is_app_level(FaultCategory c);

struct FaultSpec {
    FaultCategory category = FaultCategory::CpuContention;
    std::string target; // microservice or node id depending on category
    double intensity = 0.5; // (0,1]
    double start_ms = 0.0;
    double duration_ms = 0.0;
    // Linear intensity ramp at the start of the window; part of duration.
    // Sudden faults (switch failures) use 0.
    double ramp_ms = 0.0;
    // AppCyclic: explicit back-edge target; empty = first caller by id.
    std::string cycle_to;

    std::string validate(const topo::ServiceGraph& graph, const topo::Placement& placement) const;
};

// Ground truth produced by the simulator: one event per fault that drove the
// end-to-end tail latency over target.
struct ViolationEvent {
    Micros onset = 0;
    std::string culprit;             // microservice id
    FaultCategory cause = FaultCategory::CpuContention;
    double observed_p99_ms = 0.0;
    std::size_t fault_index = 0;     // which FaultSpec produced it
};

void write_violations(std::ostream& out, const std::vector<ViolationEvent>& events);
std::vector<ViolationEvent> read_violations(std::istream& in);
void save_violations(const std::string& path, const std::vector<ViolationEvent>& events);
std::vector<ViolationEvent> load_violations(const std::string& path);

// --- output -----------------------------------------------------------------

struct UtilizationSample {
    Micros t = 0;
    std::vector<ResourceVec> per_node; // demand / capacity, may exceed 1
};

void write_utilization(std::ostream& out, const std::vector<UtilizationSample>& series,
                       const std::vector<std::string>& node_ids);
struct UtilizationFile {
    std::vector<UtilizationSample> series;
    std::vector<std::string> node_ids;
};
UtilizationFile read_utilization(std::istream& in);
void save_utilization(const std::string& path, const std::vector<UtilizationSample>& series,
                      const std::vector<std::string>& node_ids);
UtilizationFile load_utilization(const std::string& path);

struct RunStats {
    std::int64_t arrivals = 0;
    std::int64_t completions = 0;
    std::int64_t drops = 0; // failed entry requests (double drop or rate limit)
    std::int64_t in_flight_end = 0;
    std::int64_t packets_offered = 0; // per-link packet send attempts
    std::int64_t packets_dropped = 0;
    // Full-mode outstanding-count time integral per microservice, count*us.
    std::vector<double> depth_integral_us;
    // Visit latency histograms per microservice (tracing::latency_bin).
    std::vector<std::vector<std::uint32_t>> visit_latency_hist;
    // Cumulative per-microservice stage entries/exits (conservation checks).
    std::vector<std::int64_t> visits_enqueued;
    std::vector<std::int64_t> visits_departed;
};

struct SimOutput {
    std::vector<std::string> order; // topological order; fixes all indexing
    std::vector<int> node_of;       // microservice index -> node index
    std::vector<std::string> node_ids;
    std::vector<tracing::SpanRecord> spans;
    std::vector<tracing::StageSample> samples;
    std::vector<ViolationEvent> ground_truth;
    std::vector<UtilizationSample> utilization;
    RunStats stats;
    double duration_ms = 0.0;
    double sample_interval_ms = 100.0;
    std::uint64_t seed = 0;

    std::vector<tracing::ClusterSnapshot> snapshots(tracing::InstrumentationMode mode) const;
};

// --- control hooks ----------------------------------------------------------

class Simulator;

// Mid-run mitigation surface offered to controllers (the manager wires
// through this). Effects are immediate; actuation delay is modeled by the
// caller scheduling against sample ticks.
class SimHandle {
  public:
    explicit SimHandle(Simulator& sim) : sim_(sim) {}
    Micros now() const;
    // Adds an instance on the least-cpu-loaded node; new calls are split
    // across instances by request id.
    void scale_out(const std::string& microservice);
    // Dedicated capacity share for one microservice on its node's resource.
    // Returns false if the node's carve budget is exhausted.
    bool set_carveout(const std::string& microservice, Resource r, double fraction);
    // Admission control at an entry point: keep only `fraction` of arrivals.
    void rate_limit(const std::string& entry, double fraction);
    void clear_rate_limit(const std::string& entry);
    // Per-node raw utilization (demand / capacity) right now.
    ResourceVec node_utilization(const std::string& node_id) const;
    const topo::Placement& placement() const;
    int instances_of(const std::string& microservice) const;

  private:
    Simulator& sim_;
};

class SimController {
  public:
    virtual ~SimController() = default;
    // Called after every queue-depth sample.
    virtual void on_sample(SimHandle& handle, const tracing::StageSample& sample,
                           const tracing::ClusterSnapshot& snapshot) = 0;
};

// --- configuration ----------------------------------------------------------

struct SimTuning {
    double net_latency_ms = 0.2;     // one-way link latency
    double tx_us = 15.0;             // base response transmit cost
    double retry_timeout_ms = 50.0;  // dropped packets retry once after this
    double saturation_threshold = 0.7;
    double penalty_slope = 2.0;      // quadratic penalty above the threshold
    double intake_boost = 2.5;       // kernel intake feels contention this much harder
    double spike_multiplier_max = 10.0;
    double blocking_hold_factor = 20.0; // app_blocking hold, in service means
    int max_visits_per_service = 8;  // cyclic-fault recursion guard
    double eval_window_ms = 1000.0;  // ground-truth p99 window
    double ground_truth_grace_ms = 5000.0; // fault may violate up to this after its window
};

struct SimConfig {
    topo::ServiceGraph graph;
    topo::Placement placement;
    LoadPattern load;
    std::vector<FaultSpec> faults;
    double duration_ms = 60000.0;
    std::uint64_t seed = 1;
    double sample_interval_ms = 100.0;
    tracing::InstrumentationMode controller_mode = tracing::InstrumentationMode::Full;
    tracing::TracingOverhead overhead = tracing::overhead_model(
        tracing::InstrumentationMode::Full, 100.0);
    SimTuning tuning;
};

// Effective (ramped) intensity of a fault at time t; 0 outside its window.
double effective_intensity(const FaultSpec& fault, double t_ms);

// Service-time inflation for the documented penalty model:
//   1 + sum_r sensitivity[r] * penalty(u_r),
//   penalty(u) = slope * max(0, u - threshold)^2
double service_inflation(const ResourceVec& sensitivity, const ResourceVec& utilization,
                         double threshold, double slope);

class Simulator {
  public:
    explicit Simulator(SimConfig config);
    ~Simulator();
    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    // Validates and registers a fault; may be called before or (via the
    // controller) during the run. Returns the fault index.
    std::size_t inject_fault(const FaultSpec& spec);

    SimOutput run(SimController* controller = nullptr);

    // Single-visit service-time model, exposed for oracle tests.
    static double effective_service_time_ms(const topo::Microservice& ms,
                                            const ResourceVec& utilization,
                                            const SimTuning& tuning, Rng& rng,
                                            double latency_overhead_frac);

    struct Impl;
    Impl* impl() { return impl_.get(); }

  private:
    std::unique_ptr<Impl> impl_;
};

// Convenience one-shot wrapper.
SimOutput run(const SimConfig& config, SimController* controller = nullptr);

// Sizes per-microservice intake costs so the packet-intake stage runs at
// `target_util` under the given external load. Presets call this once per
// experiment; without it intakes default to a token 25us.
void calibrate_intake(topo::ServiceGraph& graph, double arrivals_per_s,
                      double target_util = 0.35, double min_us = 10.0,
                      double max_us = 20000.0);

} // namespace seer::sim
