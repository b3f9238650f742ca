#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>

#include "seer/simulator.hpp"

using namespace seer;
using namespace seer::sim;

namespace {

topo::ServiceGraph single_service(double mean_ms, int workers) {
    topo::ServiceGraph g;
    topo::Microservice ms;
    ms.id = "m";
    ms.tier = topo::Tier::Logic;
    ms.profile.mean_ms = mean_ms;
    ms.worker_count = workers;
    ms.sensitivity = zero_resources();
    g.microservices.push_back(ms);
    g.entry_points = {"m"};
    g.qos.latency_ms = 1e9;
    g.rebuild_index();
    return g;
}

topo::ServiceGraph two_tier(double mean_a, double mean_b, int workers) {
    topo::ServiceGraph g;
    for (auto [id, mean] : {std::pair{"aa-front", mean_a}, {"bb-back", mean_b}}) {
        topo::Microservice ms;
        ms.id = id;
        ms.profile.mean_ms = mean;
        ms.worker_count = workers;
        ms.sensitivity = zero_resources();
        g.microservices.push_back(ms);
    }
    g.edges.push_back({"aa-front", "bb-back", 1.0, true, false});
    g.entry_points = {"aa-front"};
    g.qos.latency_ms = 1e9;
    g.rebuild_index();
    return g;
}

topo::Placement one_node(const topo::ServiceGraph& g, double cap = 100.0) {
    topo::Placement p;
    topo::NodeSpec node;
    node.id = "node-00";
    for (Resource r : all_resources()) at(node.capacity, r) = cap;
    p.nodes.push_back(node);
    for (const auto& ms : g.microservices) p.assignment[ms.id] = "node-00";
    return p;
}

SimConfig basic_config(topo::ServiceGraph g, double rate, double duration_ms,
                       std::uint64_t seed) {
    SimConfig cfg;
    cfg.placement = one_node(g);
    cfg.graph = std::move(g);
    cfg.load.kind = LoadKind::Constant;
    cfg.load.base_rate = rate;
    cfg.duration_ms = duration_ms;
    cfg.seed = seed;
    return cfg;
}

// Independent recount of per-microservice outstanding requests at time t
// from the span log alone.
std::vector<std::uint32_t> recount_from_spans(const SimOutput& out, Micros t) {
    std::vector<std::uint32_t> depth(out.order.size(), 0);
    for (const auto& s : out.spans) {
        if (s.dropped) continue;
        if (s.t_rx_network < 0 || s.t_rx_network > t) continue;
        if (s.t_tx >= 0 && s.t_tx <= t) continue;
        depth[s.microservice]++;
    }
    return depth;
}

std::string fingerprint(const SimOutput& out) {
    std::ostringstream os;
    tracing::write_spans(os, out.spans, out.order);
    auto snaps = out.snapshots(tracing::InstrumentationMode::Full);
    tracing::write_snapshots(os, snaps, out.order, tracing::InstrumentationMode::Full,
                             out.sample_interval_ms);
    write_violations(os, out.ground_truth);
    write_utilization(os, out.utilization, out.node_ids);
    os << out.stats.arrivals << "|" << out.stats.completions << "|" << out.stats.drops << "|"
       << out.stats.in_flight_end;
    return os.str();
}

} // namespace

TEST_CASE("arrival_rate follows the pattern definitions") {
    LoadPattern constant;
    constant.kind = LoadKind::Constant;
    constant.base_rate = 100.0;
    CHECK(arrival_rate(constant, 0.0) == 100.0);
    CHECK(arrival_rate(constant, 123456.0) == 100.0);

    LoadPattern diurnal;
    diurnal.kind = LoadKind::Diurnal;
    diurnal.base_rate = 100.0;
    diurnal.amplitude = 50.0;
    diurnal.period_ms = 86400000.0;
    CHECK(arrival_rate(diurnal, 86400000.0 / 4.0) == doctest::Approx(150.0));

    LoadPattern spike;
    spike.kind = LoadKind::Spike;
    spike.base_rate = 10.0;
    spike.spike_rate = 500.0;
    spike.spike_start_ms = 1000.0;
    spike.spike_duration_ms = 1000.0;
    CHECK(arrival_rate(spike, 1500.0) == 500.0);
    CHECK(arrival_rate(spike, 999.0) == 10.0);
    CHECK(arrival_rate(spike, 2000.0) == 10.0);
}

TEST_CASE("service inflation: zero without contention, strong past saturation") {
    SimTuning tuning;
    topo::Microservice ms;
    ms.profile.mean_ms = 10.0;
    ms.sensitivity = zero_resources();

    ResourceVec idle = zero_resources();
    CHECK(service_inflation(ms.sensitivity, idle, tuning.saturation_threshold,
                            tuning.penalty_slope) == 1.0);

    // cpu overcommitted 2x, full cpu sensitivity -> at least doubles
    at(ms.sensitivity, Resource::Cpu) = 1.0;
    ResourceVec over = zero_resources();
    at(over, Resource::Cpu) = 2.0;
    double inflation = service_inflation(ms.sensitivity, over, tuning.saturation_threshold,
                                         tuning.penalty_slope);
    double expected = 1.0 + 1.0 * tuning.penalty_slope * (2.0 - 0.7) * (2.0 - 0.7);
    CHECK(inflation == doctest::Approx(expected));
    CHECK(inflation >= 2.0);

    // disk-only contention with zero disk sensitivity -> no inflation
    topo::Microservice cpu_only = ms;
    ResourceVec disk_over = zero_resources();
    at(disk_over, Resource::DiskIo) = 3.0;
    CHECK(service_inflation(cpu_only.sensitivity, disk_over, tuning.saturation_threshold,
                            tuning.penalty_slope) == 1.0);
}

TEST_CASE("effective service time is never below zero-contention scale") {
    SimTuning tuning;
    topo::Microservice ms;
    ms.profile.mean_ms = 5.0;
    at(ms.sensitivity, Resource::Cpu) = 0.8;
    Rng r1(9), r2(9);
    ResourceVec idle = zero_resources();
    ResourceVec busy = zero_resources();
    at(busy, Resource::Cpu) = 1.5;
    for (int i = 0; i < 200; ++i) {
        double base = Simulator::effective_service_time_ms(ms, idle, tuning, r1, 0.0);
        double inflated = Simulator::effective_service_time_ms(ms, busy, tuning, r2, 0.0);
        CHECK(inflated >= base);
    }
}

TEST_CASE("zero arrival rate produces no spans and no violations") {
    auto cfg = basic_config(single_service(10.0, 1), 0.0, 5000.0, 3);
    auto out = run(cfg);
    CHECK(out.spans.empty());
    CHECK(out.ground_truth.empty());
    CHECK(out.stats.arrivals == 0);
    CHECK(out.samples.size() == 50);
    for (const auto& s : out.samples)
        for (const auto& q : s.stages) CHECK(q.total() == 0);
}

TEST_CASE("M/M/1 mean outstanding matches rho/(1-rho) within 15%") {
    // lambda=50/s against mu=100/s -> rho=0.5 -> L=1.0
    auto cfg = basic_config(single_service(10.0, 1), 50.0, 60000.0, 7);
    auto out = run(cfg);
    double mean_depth = out.stats.depth_integral_us[0] / (out.duration_ms * 1000.0);
    CHECK(mean_depth == doctest::Approx(1.0).epsilon(0.15));

    // Span-derived time average agrees with the internal integral.
    double span_integral = 0.0;
    for (const auto& s : out.spans) {
        if (s.dropped || s.t_rx_network < 0) continue;
        Micros end = s.t_tx >= 0 ? s.t_tx : us_from_ms(out.duration_ms);
        span_integral += static_cast<double>(end - s.t_rx_network);
    }
    double span_mean = span_integral / (out.duration_ms * 1000.0);
    CHECK(span_mean == doctest::Approx(mean_depth).epsilon(0.01));
}

TEST_CASE("deterministic replay: identical seeds give bit-identical output") {
    auto g = topo::hotel_reservation_preset();
    auto placement = topo::autoplace(g, 4, 40.0, 0.5);
    SimConfig cfg;
    cfg.graph = g;
    cfg.placement = placement;
    cfg.load.base_rate = 40.0;
    cfg.duration_ms = 10000.0;
    cfg.seed = 11;
    FaultSpec f;
    f.category = FaultCategory::CpuContention;
    f.target = placement.nodes[1].id;
    f.intensity = 0.8;
    f.start_ms = 3000;
    f.duration_ms = 4000;
    f.ramp_ms = 1000;
    cfg.faults.push_back(f);

    auto a = run(cfg);
    auto b = run(cfg);
    CHECK(fingerprint(a) == fingerprint(b));

    cfg.seed = 12;
    auto c = run(cfg);
    CHECK(fingerprint(a) != fingerprint(c));
}

TEST_CASE("conservation and causality hold on randomized runs") {
    Rng trial_rng(2024);
    for (int trial = 0; trial < 8; ++trial) {
        auto g = topo::hotel_reservation_preset();
        auto placement = topo::autoplace(g, 3, 30.0, 0.5);
        SimConfig cfg;
        cfg.graph = g;
        cfg.placement = placement;
        cfg.load.base_rate = 20.0 + 20.0 * trial_rng.uniform();
        cfg.duration_ms = 8000.0;
        cfg.seed = trial_rng.next_u64();
        if (trial % 2 == 1) {
            FaultSpec f;
            f.category = trial % 4 == 1 ? FaultCategory::AppDeadlock
                                        : FaultCategory::PacketDropRule;
            f.target = "memcached-hotel";
            f.intensity = 0.7;
            f.start_ms = 2000;
            f.duration_ms = 3000;
            cfg.faults.push_back(f);
        }
        auto out = run(cfg);

        CHECK(out.stats.arrivals ==
              out.stats.completions + out.stats.drops + out.stats.in_flight_end);
        CHECK(out.stats.in_flight_end >= 0);

        for (const auto& s : out.spans) {
            if (s.dropped) {
                CHECK(s.t_rx_network >= 0);
                continue;
            }
            if (s.t_rx_app >= 0) CHECK(s.t_rx_network <= s.t_rx_app);
            if (s.t_proc_end >= 0) CHECK(s.t_rx_app <= s.t_proc_end);
            if (s.t_tx >= 0) CHECK(s.t_proc_end <= s.t_tx);
        }

        // Parent sees the request before any child receives its packet.
        std::map<std::pair<std::int64_t, std::int32_t>, Micros> first_rx_app;
        for (const auto& s : out.spans)
            if (!s.dropped && s.t_rx_app >= 0) {
                auto key = std::make_pair(s.request_id, s.microservice);
                auto it = first_rx_app.find(key);
                if (it == first_rx_app.end() || s.t_rx_app < it->second)
                    first_rx_app[key] = s.t_rx_app;
            }
        for (const auto& s : out.spans) {
            if (s.parent < 0 || s.t_rx_network < 0) continue;
            auto it = first_rx_app.find({s.request_id, s.parent});
            if (it != first_rx_app.end()) CHECK(it->second <= s.t_rx_network);
        }

        // Every snapshot equals an independent recount over the span log.
        for (std::size_t si = 0; si < out.samples.size(); si += 7) {
            auto want = recount_from_spans(out, out.samples[si].t);
            auto got = tracing::aggregate(out.samples[si], tracing::InstrumentationMode::Full,
                                          out.node_of);
            REQUIRE(got.depths.size() == want.size());
            for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.depths[i] == want[i]);
        }
    }
}

TEST_CASE("switch failure drops the configured fraction of packets") {
    auto cfg = basic_config(single_service(2.0, 4), 400.0, 40000.0, 21);
    FaultSpec f;
    f.category = FaultCategory::SwitchFailure;
    f.target = "node-00";
    f.intensity = 0.3;
    f.start_ms = 0;
    f.duration_ms = 40000.0;
    cfg.faults.push_back(f);
    cfg.graph.qos.latency_ms = 1e9; // isolate the drop mechanics
    auto out = run(cfg);
    CHECK(out.stats.packets_offered > 10000);
    double frac = static_cast<double>(out.stats.packets_dropped) /
                  static_cast<double>(out.stats.packets_offered);
    CHECK(frac == doctest::Approx(0.3).epsilon(0.1));
    CHECK(std::abs(frac - 0.3) < 0.03);
}

TEST_CASE("full deadlock zeroes throughput and grows upstream queues monotonically") {
    auto cfg = basic_config(two_tier(2.0, 5.0, 4), 50.0, 20000.0, 5);
    FaultSpec f;
    f.category = FaultCategory::AppDeadlock;
    f.target = "bb-back";
    f.intensity = 1.0;
    f.start_ms = 5000;
    f.duration_ms = 10000;
    cfg.faults.push_back(f);
    auto out = run(cfg);

    int back = -1, front = -1;
    for (std::size_t i = 0; i < out.order.size(); ++i) {
        if (out.order[i] == "bb-back") back = static_cast<int>(i);
        if (out.order[i] == "aa-front") front = static_cast<int>(i);
    }
    REQUIRE(back >= 0);
    REQUIRE(front >= 0);

    // Departures from the deadlocked service stop (in-service work drains).
    int departures_in_window = 0;
    for (const auto& s : out.spans)
        if (s.microservice == back && !s.dropped && s.t_tx >= us_from_ms(5200.0) &&
            s.t_tx < us_from_ms(15000.0))
            departures_in_window++;
    CHECK(departures_in_window <= 2);

    // Upstream outstanding count grows monotonically through the window.
    std::vector<std::uint32_t> upstream;
    for (const auto& s : out.samples)
        if (s.t >= us_from_ms(5200.0) && s.t < us_from_ms(15000.0))
            upstream.push_back(s.stages[front].total() + s.stages[back].total());
    REQUIRE(upstream.size() > 10);
    for (std::size_t i = 1; i < upstream.size(); ++i) CHECK(upstream[i] >= upstream[i - 1]);
}

TEST_CASE("fault validation rejects bad specs") {
    auto cfg = basic_config(single_service(10.0, 1), 10.0, 1000.0, 1);
    Simulator sim(cfg);
    FaultSpec f;
    f.category = FaultCategory::CpuContention;
    f.target = "node-00";
    f.intensity = 0.0; // must be > 0
    f.start_ms = 0;
    f.duration_ms = 100;
    CHECK_THROWS_AS(sim.inject_fault(f), StageError);
    f.intensity = 0.5;
    f.target = "nowhere";
    CHECK_THROWS_AS(sim.inject_fault(f), StageError);
    f.category = FaultCategory::AppDeadlock;
    f.target = "zzz";
    CHECK_THROWS_AS(sim.inject_fault(f), StageError);
}

TEST_CASE("cpu contention on the caching node yields a violation blamed on that node") {
    auto g = topo::social_network_preset();
    sim::calibrate_intake(g, 60.0);
    auto placement = topo::autoplace(g, 8, 60.0, 0.45);
    std::string cache_node = placement.assignment.at("memcached-post");

    SimConfig cfg;
    cfg.graph = g;
    cfg.placement = placement;
    cfg.load.base_rate = 60.0;
    cfg.duration_ms = 60000.0;
    cfg.seed = 17;
    FaultSpec f;
    f.category = FaultCategory::CpuContention;
    f.target = cache_node;
    f.intensity = 0.9;
    f.start_ms = 15000;
    f.duration_ms = 30000;
    f.ramp_ms = 5000;
    cfg.faults.push_back(f);
    auto out = run(cfg);

    REQUIRE(!out.ground_truth.empty());
    bool on_node = false;
    for (const auto& v : out.ground_truth) {
        if (placement.assignment.at(v.culprit) == cache_node) on_node = true;
        CHECK(v.observed_p99_ms > g.qos.latency_ms);
    }
    CHECK(on_node);
}

TEST_CASE("raising fault intensity never loses ground-truth violations") {
    std::vector<int> counts;
    for (double intensity : {0.3, 0.6, 0.95}) {
        auto cfg = basic_config(single_service(8.0, 2), 150.0, 30000.0, 42);
        cfg.graph.qos.latency_ms = 60.0;
        at(cfg.graph.microservices[0].sensitivity, Resource::Cpu) = 1.0;
        cfg.placement.nodes[0].capacity = {2.0, 2.0, 2.0, 2.0, 2.0, 2.0};
        FaultSpec f;
        f.category = FaultCategory::CpuContention;
        f.target = "node-00";
        f.intensity = intensity;
        f.start_ms = 8000;
        f.duration_ms = 15000;
        f.ramp_ms = 3000;
        cfg.faults.push_back(f);
        auto out = run(cfg);
        counts.push_back(static_cast<int>(out.ground_truth.size()));
    }
    CHECK(counts[0] <= counts[1]);
    CHECK(counts[1] <= counts[2]);
}

TEST_CASE("per-microservice latency histograms from spans match internal bookkeeping") {
    auto g = topo::hotel_reservation_preset();
    auto placement = topo::autoplace(g, 3, 400.0, 0.5);
    SimConfig cfg;
    cfg.graph = g;
    cfg.placement = placement;
    cfg.load.base_rate = 400.0;
    cfg.duration_ms = 30000.0;
    cfg.seed = 33;
    auto out = run(cfg);

    std::int64_t completed = 0;
    std::vector<std::vector<std::uint32_t>> hist(
        out.order.size(), std::vector<std::uint32_t>(tracing::kLatencyBins, 0));
    for (const auto& s : out.spans) {
        if (s.dropped || s.t_tx < 0) continue;
        hist[s.microservice][tracing::latency_bin(ms_from_us(s.t_tx - s.t_rx_network))]++;
        completed++;
    }
    CHECK(completed > 10000);
    CHECK(hist == out.stats.visit_latency_hist);
}
