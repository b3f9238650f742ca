#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "seer/common.hpp"

namespace seer::tracing {

enum class InstrumentationMode { Full, AppOnly, NetworkOnly };

std::string_view mode_name(InstrumentationMode m);
InstrumentationMode mode_from_name(std::string_view s);

// One RPC visit at one microservice. Microservices are identified by their
// position in the run's topological order; files spell out the string ids.
struct SpanRecord {
    std::int64_t request_id = 0;
    std::int32_t microservice = -1;
    std::int32_t parent = -1; // -1 for entry spans
    Micros t_rx_network = -1; // packet at NIC
    Micros t_rx_app = -1;     // worker picks the request up
    Micros t_proc_end = -1;   // response ready
    Micros t_tx = -1;         // response transmitted
    bool dropped = false;

    bool causal() const {
        return dropped || (t_rx_network <= t_rx_app && t_rx_app <= t_proc_end &&
                           t_proc_end <= t_tx);
    }
};

// Queue stages instrumented per microservice (hardware NIC queues plus the
// three software queues of a typical RPC server).
struct QueueSet {
    std::uint32_t nic_rx = 0;
    std::uint32_t event_poll = 0;
    std::uint32_t socket_read = 0;
    std::uint32_t app_proc = 0;
    std::uint32_t nic_tx = 0;

    std::uint32_t total() const { return nic_rx + event_poll + socket_read + app_proc + nic_tx; }
    std::uint32_t app_total() const { return event_poll + socket_read + app_proc; }
    std::uint32_t nic_total() const { return nic_rx + nic_tx; }
};

// Raw per-interval sample of every stage of every microservice.
struct StageSample {
    Micros t = 0;
    std::vector<QueueSet> stages; // one entry per microservice, topological order
};

// The predictor's input row: one aggregated depth per microservice.
struct ClusterSnapshot {
    Micros t = 0;
    std::vector<std::uint32_t> depths; // topological order
};

// Aggregates a raw sample down to one number per microservice.
//   full         -> sum of all five stages
//   app_only     -> software stages only
//   network_only -> NIC stages only; co-located microservices share hardware
//                   queues, so each sees the node's aggregate NIC backlog
ClusterSnapshot aggregate(const StageSample& sample, InstrumentationMode mode,
                          const std::vector<int>& node_of);

// Tracing cost injected into simulated service times. Scales inversely with
// the sampling interval from the measured reference point (0.1% latency,
// 0.15% throughput at a 100 ms interval).
struct TracingOverhead {
    double latency_frac = 0.0;
    double throughput_frac = 0.0;
};
TracingOverhead overhead_model(InstrumentationMode mode, double sampling_interval_ms);

// Shared latency histogram binning (log-spaced), used for the dual
// bookkeeping between simulator-internal histograms and span-derived ones.
constexpr int kLatencyBins = 128;
int latency_bin(double ms);

// --- file formats -----------------------------------------------------------
// Spans:     "seer-spans v1" + order header, one line per span, ms with
//            3 decimals, "-" for absent fields.
// Snapshots: "seer-snapshots v1 mode=<m> interval_ms=<i>" + order header.

void write_spans(std::ostream& out, const std::vector<SpanRecord>& spans,
                 const std::vector<std::string>& order);
struct SpansFile {
    std::vector<SpanRecord> spans;
    std::vector<std::string> order;
};
SpansFile read_spans(std::istream& in);

void write_snapshots(std::ostream& out, const std::vector<ClusterSnapshot>& snaps,
                     const std::vector<std::string>& order, InstrumentationMode mode,
                     double interval_ms);
struct SnapshotsFile {
    std::vector<ClusterSnapshot> snapshots;
    std::vector<std::string> order;
    InstrumentationMode mode = InstrumentationMode::Full;
    double interval_ms = 100.0;
};
SnapshotsFile read_snapshots(std::istream& in);

void save_spans(const std::string& path, const std::vector<SpanRecord>& spans,
                const std::vector<std::string>& order);
SpansFile load_spans(const std::string& path);
void save_snapshots(const std::string& path, const std::vector<ClusterSnapshot>& snaps,
                    const std::vector<std::string>& order, InstrumentationMode mode,
                    double interval_ms);
SnapshotsFile load_snapshots(const std::string& path);

} // namespace seer::tracing
