#include "seer/tracing.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace seer::tracing {

std::string_view mode_name(InstrumentationMode m) {
    switch (m) {
        case InstrumentationMode::Full: return "full";
        case InstrumentationMode::AppOnly: return "app_only";
        case InstrumentationMode::NetworkOnly: return "network_only";
    }
    return "?";
}

InstrumentationMode mode_from_name(std::string_view s) {
    if (s == "full") return InstrumentationMode::Full;
    if (s == "app_only") return InstrumentationMode::AppOnly;
    if (s == "network_only") return InstrumentationMode::NetworkOnly;
    throw std::invalid_argument("unknown instrumentation mode: " + std::string(s));
}

ClusterSnapshot aggregate(const StageSample& sample, InstrumentationMode mode,
                          const std::vector<int>& node_of) {
    ClusterSnapshot snap;
    snap.t = sample.t;
    const std::size_t n = sample.stages.size();
    snap.depths.resize(n, 0);
    switch (mode) {
        case InstrumentationMode::Full:
            for (std::size_t i = 0; i < n; ++i) snap.depths[i] = sample.stages[i].total();
            break;
        case InstrumentationMode::AppOnly:
            for (std::size_t i = 0; i < n; ++i) snap.depths[i] = sample.stages[i].app_total();
            break;
        case InstrumentationMode::NetworkOnly: {
            // Shared hardware queues: every microservice on a node sees the
            // node's aggregate NIC backlog.
            if (node_of.size() != n)
                throw std::invalid_argument("node_of size mismatch in aggregate()");
            int max_node = -1;
            for (int nd : node_of) max_node = std::max(max_node, nd);
            std::vector<std::uint32_t> node_total(static_cast<std::size_t>(max_node + 1), 0);
            for (std::size_t i = 0; i < n; ++i)
                node_total[node_of[i]] += sample.stages[i].nic_total();
            for (std::size_t i = 0; i < n; ++i) snap.depths[i] = node_total[node_of[i]];
            break;
        }
    }
    return snap;
}

TracingOverhead overhead_model(InstrumentationMode mode, double sampling_interval_ms) {
    (void)mode; // every mode samples the same queues at the same cadence
    if (sampling_interval_ms <= 0)
        throw std::invalid_argument("sampling interval must be > 0");
    const double scale = 100.0 / sampling_interval_ms;
    return {0.001 * scale, 0.0015 * scale};
}

int latency_bin(double ms) {
    // log-spaced bins over [0.01 ms, 100 s); clamped outside.
    if (!(ms > 0.01)) return 0;
    const double lo = std::log10(0.01), hi = std::log10(100000.0);
    int bin = static_cast<int>((std::log10(ms) - lo) / (hi - lo) * kLatencyBins);
    if (bin < 0) bin = 0;
    if (bin >= kLatencyBins) bin = kLatencyBins - 1;
    return bin;
}

namespace {

std::string fmt_ms(Micros us) {
    if (us < 0) return "-";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3f", ms_from_us(us));
    return buf;
}

Micros parse_ms(const std::string& tok) {
    if (tok == "-") return -1;
    return us_from_ms(std::stod(tok));
}

void write_order(std::ostream& out, const std::vector<std::string>& order) {
    out << "# order:";
    for (const auto& id : order) out << " " << id;
    out << "\n";
}

std::vector<std::string> parse_order(const std::string& line) {
    std::istringstream is(line);
    std::string tok;
    is >> tok >> tok; // "#", "order:"
    std::vector<std::string> order;
    std::string id;
    while (is >> id) order.push_back(id);
    return order;
}

} // namespace

void write_spans(std::ostream& out, const std::vector<SpanRecord>& spans,
                 const std::vector<std::string>& order) {
    out << "seer-spans v1\n";
    write_order(out, order);
    for (const auto& s : spans) {
        out << s.request_id << " " << order.at(s.microservice) << " "
            << (s.parent >= 0 ? order.at(s.parent) : "-") << " " << fmt_ms(s.t_rx_network)
            << " " << fmt_ms(s.t_rx_app) << " " << fmt_ms(s.t_proc_end) << " "
            << fmt_ms(s.t_tx) << " " << (s.dropped ? 1 : 0) << "\n";
    }
}

SpansFile read_spans(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "seer-spans v1")
        throw StageError("tracing", "not a seer-spans v1 file");
    if (!std::getline(in, line) || line.rfind("# order:", 0) != 0)
        throw StageError("tracing", "spans file missing order header");
    SpansFile f;
    f.order = parse_order(line);
    std::unordered_map<std::string, std::int32_t> idx;
    for (std::size_t i = 0; i < f.order.size(); ++i)
        idx[f.order[i]] = static_cast<std::int32_t>(i);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        SpanRecord s;
        std::string ms_id, parent_id, rx_n, rx_a, pe, tx;
        int dropped = 0;
        is >> s.request_id >> ms_id >> parent_id >> rx_n >> rx_a >> pe >> tx >> dropped;
        if (!is) throw StageError("tracing", "bad span line: " + line);
        s.microservice = idx.at(ms_id);
        s.parent = parent_id == "-" ? -1 : idx.at(parent_id);
        s.t_rx_network = parse_ms(rx_n);
        s.t_rx_app = parse_ms(rx_a);
        s.t_proc_end = parse_ms(pe);
        s.t_tx = parse_ms(tx);
        s.dropped = dropped != 0;
        f.spans.push_back(s);
    }
    return f;
}

void write_snapshots(std::ostream& out, const std::vector<ClusterSnapshot>& snaps,
                     const std::vector<std::string>& order, InstrumentationMode mode,
                     double interval_ms) {
    char head[128];
    std::snprintf(head, sizeof(head), "seer-snapshots v1 mode=%s interval_ms=%.3f",
                  std::string(mode_name(mode)).c_str(), interval_ms);
    out << head << "\n";
    write_order(out, order);
    for (const auto& s : snaps) {
        out << fmt_ms(s.t);
        for (auto d : s.depths) out << " " << d;
        out << "\n";
    }
}

SnapshotsFile read_snapshots(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("seer-snapshots v1", 0) != 0)
        throw StageError("tracing", "not a seer-snapshots v1 file");
    SnapshotsFile f;
    {
        std::istringstream is(line);
        std::string tok;
        is >> tok >> tok; // magic
        while (is >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
            if (key == "mode") f.mode = mode_from_name(val);
            if (key == "interval_ms") f.interval_ms = std::stod(val);
        }
    }
    if (!std::getline(in, line) || line.rfind("# order:", 0) != 0)
        throw StageError("tracing", "snapshots file missing order header");
    f.order = parse_order(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string t;
        is >> t;
        ClusterSnapshot s;
        s.t = parse_ms(t);
        std::uint32_t d;
        while (is >> d) s.depths.push_back(d);
        if (s.depths.size() != f.order.size())
            throw StageError("tracing", "snapshot width mismatch: " + line);
        f.snapshots.push_back(std::move(s));
    }
    return f;
}

void save_spans(const std::string& path, const std::vector<SpanRecord>& spans,
                const std::vector<std::string>& order) {
    std::ofstream out(path);
    if (!out) throw StageError("tracing", "cannot write " + path);
    write_spans(out, spans, order);
}

SpansFile load_spans(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StageError("tracing", "cannot read " + path);
    return read_spans(in);
}

void save_snapshots(const std::string& path, const std::vector<ClusterSnapshot>& snaps,
                    const std::vector<std::string>& order, InstrumentationMode mode,
                    double interval_ms) {
    std::ofstream out(path);
    if (!out) throw StageError("tracing", "cannot write " + path);
    write_snapshots(out, snaps, order, mode, interval_ms);
}

SnapshotsFile load_snapshots(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StageError("tracing", "cannot read " + path);
    return read_snapshots(in);
}

} // namespace seer::tracing
