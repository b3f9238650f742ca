#include "seer/simulator.hpp"

#include <algorithm>
#include <cassert>
#include <cstdio>
#include <deque>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace seer::sim {

// --- load -------------------------------------------------------------------

std::string LoadPattern::validate() const {
    if (base_rate < 0) return "base_rate must be >= 0";
    switch (kind) {
        case LoadKind::Constant: break;
        case LoadKind::Diurnal:
            if (period_ms <= 0) return "diurnal period must be > 0";
            if (amplitude < 0) return "amplitude must be >= 0";
            break;
        case LoadKind::Spike:
            if (spike_rate < 0) return "spike_rate must be >= 0";
            if (spike_duration_ms < 0) return "spike_duration must be >= 0";
            break;
    }
    return "";
}

double arrival_rate(const LoadPattern& load, double t_ms) {
    switch (load.kind) {
        case LoadKind::Constant: return load.base_rate;
        case LoadKind::Diurnal: {
            double r = load.base_rate +
                       load.amplitude * std::sin(6.283185307179586 * t_ms / load.period_ms);
            return std::max(0.0, r);
        }
        case LoadKind::Spike:
            if (t_ms >= load.spike_start_ms &&
                t_ms < load.spike_start_ms + load.spike_duration_ms)
                return load.spike_rate;
            return load.base_rate;
    }
    return 0.0;
}

static double pattern_max_rate(const LoadPattern& load) {
    switch (load.kind) {
        case LoadKind::Constant: return load.base_rate;
        case LoadKind::Diurnal: return load.base_rate + load.amplitude;
        case LoadKind::Spike: return std::max(load.base_rate, load.spike_rate);
    }
    return 0.0;
}

// --- faults -----------------------------------------------------------------

std::string_view fault_category_name(FaultCategory c) {
    switch (c) {
        case FaultCategory::AppDeadlock: return "app_deadlock";
        case FaultCategory::AppBlocking: return "app_blocking";
        case FaultCategory::AppCyclic: return "app_cyclic";
        case FaultCategory::PacketDropRule: return "packet_drop_rule";
        case FaultCategory::CpuContention: return "cpu_contention";
        case FaultCategory::CacheContention: return "cache_contention";
        case FaultCategory::MemoryContention: return "memory_contention";
        case FaultCategory::NetworkContention: return "network_contention";
        case FaultCategory::DiskContention: return "disk_contention";
        case FaultCategory::LoadSpike: return "load_spike";
        case FaultCategory::SwitchFailure: return "switch_failure";
    }
    return "?";
}

FaultCategory fault_category_from_name(std::string_view s) {
    for (int i = 0; i <= static_cast<int>(FaultCategory::SwitchFailure); ++i) {
        auto c = static_cast<FaultCategory>(i);
        if (fault_category_name(c) == s) return c;
    }
    throw std::invalid_argument("unknown fault category: " + std::string(s));
}

bool fault_targets_node(FaultCategory c) {
    switch (c) {
        case FaultCategory::CpuContention:
        case FaultCategory::CacheContention:
        case FaultCategory::MemoryContention:
        case FaultCategory::NetworkContention:
        case FaultCategory::DiskContention:
        case FaultCategory::SwitchFailure: return true;
        default: return false;
    }
}

std::optional<Resource> fault_resource(FaultCategory c) {
    switch (c) {
        case FaultCategory::CpuContention: return Resource::Cpu;
        case FaultCategory::CacheContention: return Resource::Cache;
        case FaultCategory::MemoryContention: return Resource::MemoryBw;
        case FaultCategory::NetworkContention: return Resource::NetworkBw;
        case FaultCategory::DiskContention: return Resource::DiskIo;
        default: return std::nullopt;
    }
}

bool fault_is_app_level(FaultCategory c) {
    return c == FaultCategory::AppDeadlock || c == FaultCategory::AppBlocking ||
           c == FaultCategory::AppCyclic;
}

std::string FaultSpec::validate(const topo::ServiceGraph& graph,
                                const topo::Placement& placement) const {
    if (intensity <= 0.0 || intensity > 1.0) return "intensity must be in (0,1]";
    if (start_ms < 0) return "start must be >= 0";
    if (duration_ms <= 0) return "duration must be > 0";
    if (ramp_ms < 0 || ramp_ms > duration_ms) return "ramp must be in [0,duration]";
    if (fault_targets_node(category)) {
        if (!placement.node_index(target))
            return "unknown node target '" + target + "'";
    } else {
        if (!graph.index_of(target))
            return "unknown microservice target '" + target + "'";
    }
    if (category == FaultCategory::AppCyclic && !cycle_to.empty() &&
        !graph.index_of(cycle_to))
        return "unknown cycle_to '" + cycle_to + "'";
    return "";
}

double effective_intensity(const FaultSpec& fault, double t_ms) {
    if (t_ms < fault.start_ms || t_ms >= fault.start_ms + fault.duration_ms) return 0.0;
    if (fault.ramp_ms <= 0) return fault.intensity;
    double frac = (t_ms - fault.start_ms) / fault.ramp_ms;
    return fault.intensity * std::min(1.0, frac);
}

double service_inflation(const ResourceVec& sensitivity, const ResourceVec& utilization,
                         double threshold, double slope) {
    double penalty_sum = 0.0;
    for (Resource r : all_resources()) {
        double over = at(utilization, r) - threshold;
        if (over > 0) penalty_sum += at(sensitivity, r) * slope * over * over;
    }
    return 1.0 + penalty_sum;
}

// --- file IO ----------------------------------------------------------------

void write_violations(std::ostream& out, const std::vector<ViolationEvent>& events) {
    out << "seer-violations v1\n";
    for (const auto& v : events) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3f", ms_from_us(v.onset));
        out << buf << " " << v.culprit << " " << fault_category_name(v.cause) << " ";
        std::snprintf(buf, sizeof(buf), "%.3f", v.observed_p99_ms);
        out << buf << " " << v.fault_index << "\n";
    }
}

std::vector<ViolationEvent> read_violations(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "seer-violations v1")
        throw StageError("simulator", "not a seer-violations v1 file");
    std::vector<ViolationEvent> events;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        ViolationEvent v;
        double onset_ms = 0;
        std::string cause;
        is >> onset_ms >> v.culprit >> cause >> v.observed_p99_ms >> v.fault_index;
        if (!is) throw StageError("simulator", "bad violation line: " + line);
        v.onset = us_from_ms(onset_ms);
        v.cause = fault_category_from_name(cause);
        events.push_back(std::move(v));
    }
    return events;
}

void save_violations(const std::string& path, const std::vector<ViolationEvent>& events) {
    std::ofstream out(path);
    if (!out) throw StageError("simulator", "cannot write " + path);
    write_violations(out, events);
}

std::vector<ViolationEvent> load_violations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StageError("simulator", "cannot read " + path);
    return read_violations(in);
}

void write_utilization(std::ostream& out, const std::vector<UtilizationSample>& series,
                       const std::vector<std::string>& node_ids) {
    out << "seer-util v1\n# nodes:";
    for (const auto& id : node_ids) out << " " << id;
    out << "\n";
    char buf[64];
    for (const auto& s : series) {
        std::snprintf(buf, sizeof(buf), "%.3f", ms_from_us(s.t));
        out << buf;
        for (const auto& nv : s.per_node)
            for (Resource r : all_resources()) {
                std::snprintf(buf, sizeof(buf), " %.6f", at(nv, r));
                out << buf;
            }
        out << "\n";
    }
}

UtilizationFile read_utilization(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "seer-util v1")
        throw StageError("simulator", "not a seer-util v1 file");
    UtilizationFile f;
    if (!std::getline(in, line) || line.rfind("# nodes:", 0) != 0)
        throw StageError("simulator", "utilization file missing node header");
    {
        std::istringstream is(line);
        std::string tok;
        is >> tok >> tok;
        while (is >> tok) f.node_ids.push_back(tok);
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        double t_ms;
        is >> t_ms;
        UtilizationSample s;
        s.t = us_from_ms(t_ms);
        s.per_node.resize(f.node_ids.size(), zero_resources());
        for (auto& nv : s.per_node)
            for (Resource r : all_resources()) is >> at(nv, r);
        if (!is) throw StageError("simulator", "bad utilization line: " + line);
        f.series.push_back(std::move(s));
    }
    return f;
}

void save_utilization(const std::string& path, const std::vector<UtilizationSample>& series,
                      const std::vector<std::string>& node_ids) {
    std::ofstream out(path);
    if (!out) throw StageError("simulator", "cannot write " + path);
    write_utilization(out, series, node_ids);
}

UtilizationFile load_utilization(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StageError("simulator", "cannot read " + path);
    return read_utilization(in);
}

std::vector<tracing::ClusterSnapshot> SimOutput::snapshots(
    tracing::InstrumentationMode mode) const {
    std::vector<tracing::ClusterSnapshot> snaps;
    snaps.reserve(samples.size());
    for (const auto& s : samples) snaps.push_back(tracing::aggregate(s, mode, node_of));
    return snaps;
}

// --- engine -----------------------------------------------------------------

namespace {

enum class Ev : std::uint8_t {
    ExtArrival,
    CallArrive,
    IntakeHalf,
    IntakeDone,
    ComputeDone,
    HoldDone,
    ChildDone,
    TxDone,
    KickService,
    Sample,
};

struct Event {
    Micros t;
    std::uint8_t prio; // samples run after all state changes at the same tick
    std::uint64_t seq;
    Ev type;
    std::int64_t a = -1; // visit index (or payload)
    std::int64_t b = -1; // extra payload

    bool operator>(const Event& other) const {
        if (t != other.t) return t > other.t;
        if (prio != other.prio) return prio > other.prio;
        return seq > other.seq;
    }
};

// Outgoing call slot resolved at compute time.
constexpr int kMaxOutEdges = 32;

struct Visit {
    std::int64_t request_id = 0;
    std::int32_t service = -1;
    std::int32_t instance = -1;
    std::int32_t parent_visit = -1;
    Micros t_rx_network = -1;
    Micros t_rx_app = -1;
    Micros t_proc_end = -1;
    Micros t_tx = -1;
    std::uint32_t accepted_edges = 0; // bitmask into per-service call list
    std::uint8_t next_edge = 0;
    std::uint8_t retry = 0;
    bool dropped = false;
    bool compute_done = false;
    bool hold_pending = false;
    bool finished = false;
    bool notify_parent = false; // caller blocks on this child
    std::int16_t outstanding_blocking = 0;
};

struct Instance {
    std::int32_t service = -1;
    std::int32_t node = -1;
    std::deque<std::int64_t> intake_queue;
    bool intake_busy = false;
    std::deque<std::int64_t> app_queue;
    int busy = 0;
    std::deque<std::int64_t> tx_queue;
    bool tx_busy = false;
};

struct SvcState {
    std::vector<std::int32_t> instances; // global instance ids
    tracing::QueueSet stages;
    std::uint32_t outstanding = 0; // all five stages
    Micros last_change = 0;
    double depth_integral_us = 0.0;
};

struct NodeState {
    ResourceVec capacity = zero_resources();
    ResourceVec demand = zero_resources();              // busy compute demand
    std::vector<ResourceVec> demand_by_service;         // per service index
    std::vector<ResourceVec> carve;                     // fraction per service, 0 = shared
    ResourceVec carve_total = zero_resources();
};

// One potential outgoing call of a service (nominal edge or a planted
// cyclic back edge).
struct CallSlot {
    std::int32_t callee = -1;
    double probability = 1.0;
    bool blocking = true;
    std::int32_t cycle_fault = -1; // active only while that fault is live
};

} // namespace

struct Simulator::Impl {
    SimConfig cfg;
    std::vector<std::string> order;                  // topological order
    std::unordered_map<std::string, std::int32_t> svc_index; // id -> order pos
    std::vector<const topo::Microservice*> svc;      // by order pos
    std::vector<std::vector<CallSlot>> calls;        // per service
    std::vector<SvcState> svc_state;
    std::vector<Instance> instances;
    std::vector<NodeState> nodes;
    std::vector<std::string> node_ids;
    std::vector<int> node_of_service;
    std::vector<FaultSpec> faults;
    std::unordered_map<std::string, double> rate_limits; // entry id -> keep fraction

    Rng rng;
    std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events;
    std::uint64_t seq = 0;
    Micros now = 0;
    Micros horizon = 0;
    double lambda_max = 0.0;
    bool running = false;
    bool spike_headroom = false;

    std::deque<Visit> visits;
    std::unordered_map<std::int64_t, std::uint16_t> request_visit_count;
    std::int64_t next_request_id = 0;

    SimOutput out;
    std::vector<std::pair<Micros, double>> entry_latencies; // (completion, ms)
    SimController* controller = nullptr;

    explicit Impl(SimConfig config) : cfg(std::move(config)), rng(cfg.seed) {}

    // -- setup ----------------------------------------------------------------

    void setup() {
        auto report = topo::validate_graph(cfg.graph);
        if (!report.valid())
            throw StageError("simulator", "invalid graph:\n" + report.to_string());
        auto preport = cfg.placement.validate(cfg.graph);
        if (!preport.valid())
            throw StageError("simulator", "invalid placement:\n" + preport.to_string());
        std::string lerr = cfg.load.validate();
        if (!lerr.empty()) throw StageError("simulator", "invalid load: " + lerr);
        if (cfg.duration_ms <= 0) throw StageError("simulator", "duration must be > 0");

        order = topo::topological_order(cfg.graph);
        for (std::size_t i = 0; i < order.size(); ++i)
            svc_index[order[i]] = static_cast<std::int32_t>(i);
        svc.resize(order.size());
        for (const auto& ms : cfg.graph.microservices) svc[svc_index[ms.id]] = &ms;

        for (const auto& node : cfg.placement.nodes) node_ids.push_back(node.id);
        nodes.resize(cfg.placement.nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            nodes[i].capacity = cfg.placement.nodes[i].capacity;
            nodes[i].demand_by_service.assign(order.size(), zero_resources());
            nodes[i].carve.assign(order.size(), zero_resources());
        }

        node_of_service.resize(order.size());
        svc_state.resize(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            const std::string& node_id = cfg.placement.assignment.at(order[i]);
            node_of_service[i] = static_cast<int>(*cfg.placement.node_index(node_id));
            Instance inst;
            inst.service = static_cast<std::int32_t>(i);
            inst.node = node_of_service[i];
            instances.push_back(inst);
            svc_state[i].instances.push_back(static_cast<std::int32_t>(instances.size() - 1));
        }

        calls.assign(order.size(), {});
        for (const auto& e : cfg.graph.edges) {
            if (e.injected) continue;
            CallSlot slot;
            slot.callee = svc_index.at(e.to);
            slot.probability = e.probability;
            slot.blocking = e.blocking;
            calls[svc_index.at(e.from)].push_back(slot);
        }
        for (auto& c : calls)
            if (c.size() > kMaxOutEdges)
                throw StageError("simulator", "fanout exceeds the supported edge count");

        out.order = order;
        out.node_of = node_of_service;
        out.node_ids = node_ids;
        out.duration_ms = cfg.duration_ms;
        out.sample_interval_ms = cfg.sample_interval_ms;
        out.seed = cfg.seed;
        out.stats.depth_integral_us.assign(order.size(), 0.0);
        out.stats.visit_latency_hist.assign(order.size(),
                                            std::vector<std::uint32_t>(tracing::kLatencyBins, 0));
        out.stats.visits_enqueued.assign(order.size(), 0);
        out.stats.visits_departed.assign(order.size(), 0);

        horizon = us_from_ms(cfg.duration_ms);
    }

    std::size_t add_fault(const FaultSpec& spec) {
        std::string err = spec.validate(cfg.graph, cfg.placement);
        if (!err.empty())
            throw StageError("simulator", "invalid fault (" +
                                              std::string(fault_category_name(spec.category)) +
                                              " on '" + spec.target + "'): " + err);
        if (running && spec.category == FaultCategory::LoadSpike && !spike_headroom)
            throw StageError("simulator",
                             "load_spike injected mid-run without arrival headroom");
        faults.push_back(spec);
        std::size_t idx = faults.size() - 1;
        if (spec.category == FaultCategory::AppCyclic) plant_cycle_edge(spec, idx);
        if (spec.category == FaultCategory::AppDeadlock && running)
            schedule(us_from_ms(spec.start_ms + spec.duration_ms), Ev::KickService,
                     svc_index.at(spec.target));
        return idx;
    }

    void plant_cycle_edge(const FaultSpec& spec, std::size_t fault_idx) {
        std::int32_t from = svc_index.at(spec.target);
        std::int32_t to = -1;
        if (!spec.cycle_to.empty()) {
            to = svc_index.at(spec.cycle_to);
        } else {
            // First caller by id.
            std::string best;
            for (const auto& e : cfg.graph.edges) {
                if (e.injected || e.to != spec.target) continue;
                if (best.empty() || e.from < best) best = e.from;
            }
            if (best.empty()) return; // no caller; the fault has no cycle to plant
            to = svc_index.at(best);
        }
        CallSlot slot;
        slot.callee = to;
        slot.probability = 1.0; // gated by effective intensity at call time
        slot.blocking = true;
        slot.cycle_fault = static_cast<std::int32_t>(fault_idx);
        calls[from].push_back(slot);
    }

    // -- fault state ----------------------------------------------------------

    double t_ms() const { return ms_from_us(now); }

    double load_spike_multiplier(double at_ms) const {
        double mult = 1.0;
        for (const auto& f : faults) {
            if (f.category != FaultCategory::LoadSpike) continue;
            double ei = effective_intensity(f, at_ms);
            if (ei > 0) mult *= 1.0 + ei * (cfg.tuning.spike_multiplier_max - 1.0);
        }
        return mult;
    }

    double drop_probability(std::int32_t service) const {
        double keep = 1.0;
        double at_ms = t_ms();
        for (const auto& f : faults) {
            double ei = 0.0;
            if (f.category == FaultCategory::PacketDropRule && svc_index.at(f.target) == service)
                ei = effective_intensity(f, at_ms);
            else if (f.category == FaultCategory::SwitchFailure &&
                     static_cast<int>(*cfg.placement.node_index(f.target)) ==
                         node_of_service[service])
                ei = effective_intensity(f, at_ms);
            if (ei > 0) keep *= 1.0 - ei;
        }
        return 1.0 - keep;
    }

    int blocked_workers(std::int32_t service) const {
        double frac = 0.0;
        double at_ms = t_ms();
        for (const auto& f : faults)
            if (f.category == FaultCategory::AppDeadlock && svc_index.at(f.target) == service)
                frac = std::max(frac, effective_intensity(f, at_ms));
        return static_cast<int>(std::lround(frac * svc[service]->worker_count));
    }

    double blocking_hold_ms(std::int32_t service) const {
        double at_ms = t_ms();
        double hold = 0.0;
        for (const auto& f : faults)
            if (f.category == FaultCategory::AppBlocking && svc_index.at(f.target) == service)
                hold += effective_intensity(f, at_ms) * cfg.tuning.blocking_hold_factor *
                        svc[service]->profile.mean_ms;
        return hold;
    }

    double external_demand(int node, Resource r) const {
        double at_ms = t_ms();
        double demand = 0.0;
        for (const auto& f : faults) {
            auto res = fault_resource(f.category);
            if (!res || *res != r) continue;
            if (static_cast<int>(*cfg.placement.node_index(f.target)) != node) continue;
            demand += effective_intensity(f, at_ms) * at(nodes[node].capacity, r);
        }
        return demand;
    }

    // Utilization as seen by one microservice: private carve if present,
    // otherwise the shared pool (external fault demand lands in the pool).
    ResourceVec utilization_for(std::int32_t service) const {
        int n = node_of_service[service];
        const NodeState& node = nodes[n];
        ResourceVec u = zero_resources();
        for (Resource r : all_resources()) {
            double carve_frac = at(node.carve[service], r);
            double cap = at(node.capacity, r);
            if (carve_frac > 0) {
                at(u, r) = at(node.demand_by_service[service], r) / (carve_frac * cap);
            } else {
                double carved_demand = 0.0;
                for (std::size_t m = 0; m < node.carve.size(); ++m)
                    if (at(node.carve[m], r) > 0)
                        carved_demand += at(node.demand_by_service[m], r);
                double shared_cap = (1.0 - at(node.carve_total, r)) * cap;
                double shared_demand =
                    at(node.demand, r) - carved_demand + external_demand(n, r);
                at(u, r) = shared_cap > 0 ? shared_demand / shared_cap : 0.0;
            }
        }
        return u;
    }

    // Raw node utilization for monitoring: all demand over raw capacity.
    ResourceVec node_utilization(int n) const {
        ResourceVec u = zero_resources();
        for (Resource r : all_resources())
            at(u, r) = (at(nodes[n].demand, r) + external_demand(n, r)) /
                       at(nodes[n].capacity, r);
        return u;
    }

    // NIC/kernel intake slowdown: contention hits packet processing harder
    // than application work (intake_boost), and network-bandwidth pressure
    // hits it at full weight regardless of the service's own profile.
    double intake_inflation(std::int32_t service) const {
        ResourceVec u = utilization_for(service);
        const ResourceVec& sens = svc[service]->sensitivity;
        double th = cfg.tuning.saturation_threshold, slope = cfg.tuning.penalty_slope;
        double sum = 0.0;
        for (Resource r : all_resources()) {
            double over = at(u, r) - th;
            if (over <= 0) continue;
            double w = (r == Resource::NetworkBw) ? 1.0 : at(sens, r);
            sum += w * slope * over * over;
        }
        return 1.0 + cfg.tuning.intake_boost * sum;
    }

    // -- stage accounting -------------------------------------------------------

    void depth_delta(std::int32_t service, int delta) {
        SvcState& st = svc_state[service];
        st.depth_integral_us += static_cast<double>(st.outstanding) *
                                static_cast<double>(now - st.last_change);
        st.last_change = now;
        st.outstanding = static_cast<std::uint32_t>(static_cast<std::int64_t>(st.outstanding) + delta);
    }

    // -- event plumbing ---------------------------------------------------------

    void schedule(Micros t, Ev type, std::int64_t a = -1, std::int64_t b = -1,
                  std::uint8_t prio = 0) {
        events.push(Event{t, prio, seq++, type, a, b});
    }

    // -- arrival process --------------------------------------------------------

    void schedule_next_arrival() {
        if (lambda_max <= 0) return;
        double dt_s = rng.exponential(1.0 / lambda_max);
        Micros t = now + std::max<Micros>(1, us_from_ms(dt_s * 1000.0));
        if (t <= horizon) schedule(t, Ev::ExtArrival);
    }

    void on_ext_arrival() {
        schedule_next_arrival();
        double lam = arrival_rate(cfg.load, t_ms()) * load_spike_multiplier(t_ms());
        double accept = rng.uniform();
        if (accept >= lam / lambda_max) return; // thinned
        out.stats.arrivals++;
        double entry_pick = rng.uniform();
        std::size_t ei = std::min(cfg.graph.entry_points.size() - 1,
                                  static_cast<std::size_t>(entry_pick *
                                                           cfg.graph.entry_points.size()));
        std::int32_t entry = svc_index.at(cfg.graph.entry_points[ei]);
        auto limit = rate_limits.find(cfg.graph.entry_points[ei]);
        if (limit != rate_limits.end()) {
            if (rng.uniform() >= limit->second) {
                out.stats.drops++; // admission control
                return;
            }
        }
        std::int64_t rid = next_request_id++;
        spawn_visit(rid, entry, -1, /*retry=*/0, /*notify_parent=*/false);
    }

    // -- visit lifecycle --------------------------------------------------------

    std::int64_t spawn_visit(std::int64_t request_id, std::int32_t service,
                             std::int32_t parent_visit, std::uint8_t retry,
                             bool notify_parent) {
        Visit v;
        v.request_id = request_id;
        v.service = service;
        const auto& inst_list = svc_state[service].instances;
        v.instance = inst_list[static_cast<std::size_t>(request_id) % inst_list.size()];
        v.parent_visit = parent_visit;
        v.retry = retry;
        v.notify_parent = notify_parent;
        visits.push_back(v);
        std::int64_t vid = static_cast<std::int64_t>(visits.size()) - 1;
        schedule(now + us_from_ms(cfg.tuning.net_latency_ms), Ev::CallArrive, vid);
        return vid;
    }

    void on_call_arrive(std::int64_t vid) {
        Visit& v = visits[vid];
        out.stats.packets_offered++;
        double p_drop = drop_probability(v.service);
        double u = rng.uniform(); // always consumed: keeps seeds aligned across intensities
        if (u < p_drop) {
            out.stats.packets_dropped++;
            v.dropped = true;
            v.t_rx_network = now;
            emit_span(v);
            if (v.retry == 0) {
                schedule_retry(v); // one retransmit after the timeout
            } else {
                fail_call(v);
            }
            return;
        }
        v.t_rx_network = now;
        out.stats.visits_enqueued[v.service]++;
        Instance& inst = instances[v.instance];
        svc_state[v.service].stages.nic_rx++;
        depth_delta(v.service, +1);
        inst.intake_queue.push_back(vid);
        maybe_start_intake(v.instance);
    }

    void schedule_retry(const Visit& dropped_visit) {
        Visit v;
        v.request_id = dropped_visit.request_id;
        v.service = dropped_visit.service;
        v.instance = dropped_visit.instance;
        v.parent_visit = dropped_visit.parent_visit;
        v.retry = 1;
        v.notify_parent = dropped_visit.notify_parent;
        visits.push_back(v);
        std::int64_t vid = static_cast<std::int64_t>(visits.size()) - 1;
        schedule(now + us_from_ms(cfg.tuning.retry_timeout_ms), Ev::CallArrive, vid);
    }

    void fail_call(const Visit& v) {
        if (v.parent_visit >= 0) {
            // The caller gives up on this child after its timeout expires.
            if (v.notify_parent)
                schedule(now + us_from_ms(cfg.tuning.retry_timeout_ms), Ev::ChildDone,
                         v.parent_visit);
        } else {
            out.stats.drops++;
        }
    }

    void maybe_start_intake(std::int32_t inst_id) {
        Instance& inst = instances[inst_id];
        if (inst.intake_busy || inst.intake_queue.empty()) return;
        inst.intake_busy = true;
        std::int64_t vid = inst.intake_queue.front();
        inst.intake_queue.pop_front();
        Visit& v = visits[vid];
        svc_state[v.service].stages.nic_rx--;
        svc_state[v.service].stages.event_poll++;
        double total_us = svc[v.service]->intake_us * intake_inflation(v.service) *
                          (1.0 + cfg.overhead.throughput_frac);
        Micros half = std::max<Micros>(1, static_cast<Micros>(std::llround(total_us / 2.0)));
        schedule(now + half, Ev::IntakeHalf, vid, half);
    }

    void on_intake_half(std::int64_t vid, Micros half) {
        Visit& v = visits[vid];
        svc_state[v.service].stages.event_poll--;
        svc_state[v.service].stages.socket_read++;
        schedule(now + half, Ev::IntakeDone, vid);
    }

    void on_intake_done(std::int64_t vid) {
        Visit& v = visits[vid];
        Instance& inst = instances[v.instance];
        svc_state[v.service].stages.socket_read--;
        svc_state[v.service].stages.app_proc++;
        inst.app_queue.push_back(vid);
        inst.intake_busy = false;
        maybe_start_intake(v.instance);
        pump_workers(v.instance);
    }

    void pump_workers(std::int32_t inst_id) {
        Instance& inst = instances[inst_id];
        int available = svc[inst.service]->worker_count - blocked_workers(inst.service);
        while (inst.busy < available && !inst.app_queue.empty()) {
            std::int64_t vid = inst.app_queue.front();
            inst.app_queue.pop_front();
            start_worker(vid);
        }
    }

    void start_worker(std::int64_t vid) {
        Visit& v = visits[vid];
        Instance& inst = instances[v.instance];
        inst.busy++;
        v.t_rx_app = now;
        // Demand is held only while computing.
        NodeState& node = nodes[inst.node];
        const ResourceVec& sens = svc[v.service]->sensitivity;
        for (Resource r : all_resources()) {
            at(node.demand, r) += at(sens, r);
            at(node.demand_by_service[v.service], r) += at(sens, r);
        }
        ResourceVec u = utilization_for(v.service);
        double base = draw_base_service_ms(*svc[v.service]);
        double inflation = service_inflation(sens, u, cfg.tuning.saturation_threshold,
                                             cfg.tuning.penalty_slope);
        double total_ms = base * inflation * (1.0 + cfg.overhead.latency_frac);
        schedule(now + std::max<Micros>(1, us_from_ms(total_ms)), Ev::ComputeDone, vid);
    }

    double draw_base_service_ms(const topo::Microservice& ms) {
        switch (ms.profile.kind) {
            case topo::DistKind::Exponential: return rng.exponential(ms.profile.mean_ms);
            case topo::DistKind::LogNormal:
                return rng.lognormal(ms.profile.mean_ms, ms.profile.dispersion);
        }
        return ms.profile.mean_ms;
    }

    void on_compute_done(std::int64_t vid) {
        Visit& v = visits[vid];
        Instance& inst = instances[v.instance];
        NodeState& node = nodes[inst.node];
        const ResourceVec& sens = svc[v.service]->sensitivity;
        for (Resource r : all_resources()) {
            at(node.demand, r) -= at(sens, r);
            at(node.demand_by_service[v.service], r) -= at(sens, r);
        }
        v.compute_done = true;

        // Resolve which calls fire. One uniform per slot, always consumed.
        const auto& slots = calls[v.service];
        v.accepted_edges = 0;
        for (std::size_t i = 0; i < slots.size(); ++i) {
            double p = slots[i].probability;
            if (slots[i].cycle_fault >= 0)
                p = effective_intensity(faults[slots[i].cycle_fault], t_ms());
            double u = rng.uniform();
            if (u < p && can_visit(v.request_id, slots[i].callee))
                v.accepted_edges |= (1u << i);
        }
        v.next_edge = 0;

        double hold = blocking_hold_ms(v.service);
        if (hold > 0) {
            v.hold_pending = true;
            schedule(now + us_from_ms(hold), Ev::HoldDone, vid);
        }
        advance_calls(vid);
    }

    // Bounds cyclic-fault storms: per request, at most max_visits_per_service
    // visits of any one microservice.
    bool can_visit(std::int64_t request_id, std::int32_t service) {
        auto& count =
            request_visit_count[request_id * static_cast<std::int64_t>(order.size()) + service];
        if (count >= cfg.tuning.max_visits_per_service) return false;
        ++count;
        return true;
    }

    // Issues outstanding calls per the fanout discipline; finishes the visit
    // once everything has been issued and all blocking children answered.
    void advance_calls(std::int64_t vid) {
        Visit& v = visits[vid];
        if (v.finished) return;
        const auto& slots = calls[v.service];
        auto mode = svc[v.service]->fanout;

        if (mode == topo::FanoutMode::ParallelJoin || mode == topo::FanoutMode::FireAndForget) {
            while (v.next_edge < slots.size()) {
                std::uint8_t i = v.next_edge++;
                if (!(visits[vid].accepted_edges & (1u << i))) continue;
                bool blocking = slots[i].blocking && mode != topo::FanoutMode::FireAndForget;
                if (blocking) visits[vid].outstanding_blocking++;
                spawn_visit(visits[vid].request_id, slots[i].callee,
                            static_cast<std::int32_t>(vid), 0, blocking);
            }
        } else { // Sequential
            while (v.next_edge < slots.size()) {
                std::uint8_t i = v.next_edge++;
                if (!(visits[vid].accepted_edges & (1u << i))) continue;
                bool blocking = slots[i].blocking;
                if (blocking) visits[vid].outstanding_blocking++;
                spawn_visit(visits[vid].request_id, slots[i].callee,
                            static_cast<std::int32_t>(vid), 0, blocking);
                if (blocking) return; // wait for this child before issuing the next
            }
        }
        maybe_finish_processing(vid);
    }

    void on_child_done(std::int64_t parent_vid) {
        Visit& v = visits[parent_vid];
        if (v.finished) return;
        v.outstanding_blocking--;
        if (svc[v.service]->fanout == topo::FanoutMode::Sequential) {
            advance_calls(parent_vid);
        } else {
            maybe_finish_processing(parent_vid);
        }
    }

    void on_hold_done(std::int64_t vid) {
        Visit& v = visits[vid];
        v.hold_pending = false;
        maybe_finish_processing(vid);
    }

    void maybe_finish_processing(std::int64_t vid) {
        Visit& v = visits[vid];
        if (v.finished || !v.compute_done || v.hold_pending) return;
        if (v.outstanding_blocking > 0) return;
        if (v.next_edge < calls[v.service].size() &&
            svc[v.service]->fanout == topo::FanoutMode::Sequential)
            return; // still issuing
        v.finished = true;
        v.t_proc_end = now;
        Instance& inst = instances[v.instance];
        inst.busy--;
        svc_state[v.service].stages.app_proc--;
        svc_state[v.service].stages.nic_tx++;
        inst.tx_queue.push_back(vid);
        maybe_start_tx(v.instance);
        pump_workers(v.instance);
    }

    void maybe_start_tx(std::int32_t inst_id) {
        Instance& inst = instances[inst_id];
        if (inst.tx_busy || inst.tx_queue.empty()) return;
        inst.tx_busy = true;
        std::int64_t vid = inst.tx_queue.front();
        inst.tx_queue.pop_front();
        double total_us = cfg.tuning.tx_us * intake_inflation(visits[vid].service);
        schedule(now + std::max<Micros>(1, static_cast<Micros>(std::llround(total_us))),
                 Ev::TxDone, vid);
    }

    void on_tx_done(std::int64_t vid) {
        Visit& v = visits[vid];
        Instance& inst = instances[v.instance];
        v.t_tx = now;
        svc_state[v.service].stages.nic_tx--;
        depth_delta(v.service, -1);
        out.stats.visits_departed[v.service]++;
        inst.tx_busy = false;
        maybe_start_tx(v.instance);

        double visit_ms = ms_from_us(v.t_tx - v.t_rx_network);
        out.stats.visit_latency_hist[v.service][tracing::latency_bin(visit_ms)]++;
        emit_span(v);

        if (v.parent_visit >= 0) {
            if (v.notify_parent)
                schedule(now + us_from_ms(cfg.tuning.net_latency_ms), Ev::ChildDone,
                         v.parent_visit);
        } else {
            out.stats.completions++;
            entry_latencies.emplace_back(v.t_tx, visit_ms);
        }
    }

    void emit_span(const Visit& v) {
        tracing::SpanRecord s;
        s.request_id = v.request_id;
        s.microservice = v.service;
        s.parent = v.parent_visit >= 0 ? visits[v.parent_visit].service : -1;
        s.t_rx_network = v.t_rx_network;
        s.t_rx_app = v.t_rx_app;
        s.t_proc_end = v.t_proc_end;
        s.t_tx = v.t_tx;
        s.dropped = v.dropped;
        out.spans.push_back(s);
    }

    // -- sampling ---------------------------------------------------------------

    void on_sample() {
        tracing::StageSample sample;
        sample.t = now;
        sample.stages.reserve(order.size());
        for (const auto& st : svc_state) sample.stages.push_back(st.stages);
        out.samples.push_back(sample);

        UtilizationSample util;
        util.t = now;
        util.per_node.reserve(nodes.size());
        for (std::size_t n = 0; n < nodes.size(); ++n)
            util.per_node.push_back(node_utilization(static_cast<int>(n)));
        out.utilization.push_back(util);

        if (controller) {
            SimHandle handle(*owner);
            auto snap = tracing::aggregate(sample, cfg.controller_mode, node_of_service);
            controller->on_sample(handle, sample, snap);
        }

        Micros next = now + us_from_ms(cfg.sample_interval_ms);
        if (next <= horizon) schedule(next, Ev::Sample, -1, -1, /*prio=*/1);
    }

    // -- main loop ---------------------------------------------------------------

    Simulator* owner = nullptr;

    SimOutput run(SimController* ctrl) {
        controller = ctrl;
        running = true;

        spike_headroom = false;
        for (const auto& f : faults)
            if (f.category == FaultCategory::LoadSpike) spike_headroom = true;
        lambda_max = pattern_max_rate(cfg.load) *
                     (spike_headroom ? cfg.tuning.spike_multiplier_max : 1.0);

        for (const auto& f : faults)
            if (f.category == FaultCategory::AppDeadlock)
                schedule(us_from_ms(f.start_ms + f.duration_ms), Ev::KickService,
                         svc_index.at(f.target));

        schedule_next_arrival();
        Micros first_sample = us_from_ms(cfg.sample_interval_ms);
        if (first_sample <= horizon) schedule(first_sample, Ev::Sample, -1, -1, 1);

        while (!events.empty()) {
            Event ev = events.top();
            events.pop();
            if (ev.t > horizon) break;
            now = ev.t;
            switch (ev.type) {
                case Ev::ExtArrival: on_ext_arrival(); break;
                case Ev::CallArrive: on_call_arrive(ev.a); break;
                case Ev::IntakeHalf: on_intake_half(ev.a, ev.b); break;
                case Ev::IntakeDone: on_intake_done(ev.a); break;
                case Ev::ComputeDone: on_compute_done(ev.a); break;
                case Ev::HoldDone: on_hold_done(ev.a); break;
                case Ev::ChildDone: on_child_done(ev.a); break;
                case Ev::TxDone: on_tx_done(ev.a); break;
                case Ev::KickService: {
                    for (std::int32_t inst : svc_state[ev.a].instances) pump_workers(inst);
                    break;
                }
                case Ev::Sample: on_sample(); break;
            }
        }
        now = horizon;
        finalize();
        running = false;
        return std::move(out);
    }

    void finalize() {
        // Close depth integrals.
        for (std::size_t i = 0; i < svc_state.size(); ++i) {
            depth_delta(static_cast<std::int32_t>(i), 0);
            out.stats.depth_integral_us[i] = svc_state[i].depth_integral_us;
        }
        // Residual spans for visits still in flight (t_tx stays absent).
        for (const auto& v : visits) {
            if (v.t_tx >= 0 || v.dropped) continue;
            if (v.t_rx_network < 0) continue; // packet still on the wire
            emit_span(v);
        }
        out.stats.in_flight_end = out.stats.arrivals - out.stats.completions - out.stats.drops;
        derive_ground_truth();
    }

    // One ViolationEvent per fault whose window (plus grace) saw the sliding
    // p99 cross the QoS target.
    void derive_ground_truth() {
        if (entry_latencies.empty() || faults.empty()) return;
        const double target = cfg.graph.qos.latency_ms;
        const double pct = cfg.graph.qos.percentile;
        const Micros win = us_from_ms(cfg.tuning.eval_window_ms);
        const Micros hop = us_from_ms(cfg.sample_interval_ms);

        for (std::size_t fi = 0; fi < faults.size(); ++fi) {
            const FaultSpec& f = faults[fi];
            Micros from = us_from_ms(f.start_ms);
            Micros to = std::min(horizon, us_from_ms(f.start_ms + f.duration_ms +
                                                     cfg.tuning.ground_truth_grace_ms));
            // completion times are sorted by construction
            std::size_t lo = 0;
            while (lo < entry_latencies.size() && entry_latencies[lo].first < from) ++lo;
            std::vector<double> window;
            for (Micros end = from + win; end <= to; end += hop) {
                window.clear();
                for (std::size_t i = lo; i < entry_latencies.size(); ++i) {
                    if (entry_latencies[i].first >= end) break;
                    if (entry_latencies[i].first >= end - win)
                        window.push_back(entry_latencies[i].second);
                }
                while (lo < entry_latencies.size() && entry_latencies[lo].first < end - win)
                    ++lo;
                if (window.size() < 5) continue;
                double p = percentile(window, pct);
                if (p > target) {
                    ViolationEvent ev;
                    ev.onset = end;
                    ev.culprit = culprit_for_fault(f, end);
                    ev.cause = f.category;
                    ev.observed_p99_ms = p;
                    ev.fault_index = fi;
                    out.ground_truth.push_back(ev);
                    break;
                }
            }
        }
        std::sort(out.ground_truth.begin(), out.ground_truth.end(),
                  [](const ViolationEvent& a, const ViolationEvent& b) {
                      if (a.onset != b.onset) return a.onset < b.onset;
                      return a.fault_index < b.fault_index;
                  });
    }

    std::string culprit_for_fault(const FaultSpec& f, Micros onset) const {
        if (!fault_targets_node(f.category)) return f.target;
        int node = static_cast<int>(*cfg.placement.node_index(f.target));
        // Most-affected microservice on the node: largest outstanding-count
        // growth between the fault start and the onset.
        const tracing::StageSample* at_start = nullptr;
        const tracing::StageSample* at_onset = nullptr;
        for (const auto& s : out.samples) {
            if (s.t <= us_from_ms(f.start_ms)) at_start = &s;
            if (s.t <= onset) at_onset = &s;
        }
        std::int64_t best_growth = -1;
        std::int32_t best = -1;
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (node_of_service[i] != node) continue;
            std::int64_t before = at_start ? at_start->stages[i].total() : 0;
            std::int64_t after = at_onset ? at_onset->stages[i].total() : 0;
            std::int64_t growth = after - before;
            if (growth > best_growth) {
                best_growth = growth;
                best = static_cast<std::int32_t>(i);
            }
        }
        return best >= 0 ? order[best] : f.target;
    }
};

// --- Simulator facade ---------------------------------------------------------

Simulator::Simulator(SimConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
    impl_->setup();
    impl_->owner = this;
    for (const auto& f : impl_->cfg.faults) impl_->add_fault(f);
    impl_->cfg.faults.clear(); // registered; avoid double injection
}

Simulator::~Simulator() = default;

std::size_t Simulator::inject_fault(const FaultSpec& spec) { return impl_->add_fault(spec); }

SimOutput Simulator::run(SimController* controller) { return impl_->run(controller); }

double Simulator::effective_service_time_ms(const topo::Microservice& ms,
                                            const ResourceVec& utilization,
                                            const SimTuning& tuning, Rng& rng,
                                            double latency_overhead_frac) {
    double base = 0.0;
    switch (ms.profile.kind) {
        case topo::DistKind::Exponential: base = rng.exponential(ms.profile.mean_ms); break;
        case topo::DistKind::LogNormal:
            base = rng.lognormal(ms.profile.mean_ms, ms.profile.dispersion);
            break;
    }
    double inflation = service_inflation(ms.sensitivity, utilization,
                                         tuning.saturation_threshold, tuning.penalty_slope);
    return base * inflation * (1.0 + latency_overhead_frac);
}

SimOutput run(const SimConfig& config, SimController* controller) {
    Simulator sim(config);
    return sim.run(controller);
}

// --- SimHandle ----------------------------------------------------------------

Micros SimHandle::now() const { return sim_.impl()->now; }

void SimHandle::scale_out(const std::string& microservice) {
    auto* impl = sim_.impl();
    auto it = impl->svc_index.find(microservice);
    if (it == impl->svc_index.end())
        throw StageError("manager", "scale_out: unknown microservice " + microservice);
    std::int32_t service = it->second;
    // Least-cpu-utilized node, deterministic tie-break by index.
    int best = 0;
    double best_u = 1e300;
    for (std::size_t n = 0; n < impl->nodes.size(); ++n) {
        double u = at(impl->node_utilization(static_cast<int>(n)), Resource::Cpu);
        if (u < best_u) {
            best_u = u;
            best = static_cast<int>(n);
        }
    }
    Instance inst;
    inst.service = service;
    inst.node = best;
    impl->instances.push_back(inst);
    impl->svc_state[service].instances.push_back(
        static_cast<std::int32_t>(impl->instances.size() - 1));
}

bool SimHandle::set_carveout(const std::string& microservice, Resource r, double fraction) {
    auto* impl = sim_.impl();
    auto it = impl->svc_index.find(microservice);
    if (it == impl->svc_index.end())
        throw StageError("manager", "carveout: unknown microservice " + microservice);
    std::int32_t service = it->second;
    int n = impl->node_of_service[service];
    NodeState& node = impl->nodes[n];
    double current = at(node.carve[service], r);
    double would_be = at(node.carve_total, r) - current + fraction;
    if (would_be > 0.85) return false; // keep a shared pool
    at(node.carve_total, r) = would_be;
    at(node.carve[service], r) = fraction;
    return true;
}

void SimHandle::rate_limit(const std::string& entry, double fraction) {
    sim_.impl()->rate_limits[entry] = std::clamp(fraction, 0.0, 1.0);
}

void SimHandle::clear_rate_limit(const std::string& entry) {
    sim_.impl()->rate_limits.erase(entry);
}

ResourceVec SimHandle::node_utilization(const std::string& node_id) const {
    auto* impl = sim_.impl();
    auto idx = impl->cfg.placement.node_index(node_id);
    if (!idx) throw StageError("manager", "unknown node " + node_id);
    return impl->node_utilization(static_cast<int>(*idx));
}

const topo::Placement& SimHandle::placement() const { return sim_.impl()->cfg.placement; }

int SimHandle::instances_of(const std::string& microservice) const {
    auto* impl = sim_.impl();
    return static_cast<int>(impl->svc_state[impl->svc_index.at(microservice)].instances.size());
}

// --- intake calibration ---------------------------------------------------------

void calibrate_intake(topo::ServiceGraph& graph, double arrivals_per_s, double target_util,
                      double min_us, double max_us) {
    auto rates = topo::visit_rates(graph, arrivals_per_s);
    for (auto& ms : graph.microservices) {
        double lam = rates.at(ms.id);
        double us = lam > 0 ? target_util / lam * 1e6 : max_us;
        ms.intake_us = std::clamp(us, min_us, max_us);
    }
}

} // namespace seer::sim
