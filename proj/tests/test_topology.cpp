#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "seer/topology.hpp"

using namespace seer;
using namespace seer::topo;

namespace {

ServiceGraph chain_graph() {
    ServiceGraph g;
    for (auto [id, tier] : {std::pair{"front", Tier::FrontEnd}, {"logic", Tier::Logic},
                            {"cache", Tier::Caching}}) {
        Microservice ms;
        ms.id = id;
        ms.tier = tier;
        ms.profile.mean_ms = 1.0;
        ms.worker_count = 2;
        g.microservices.push_back(ms);
    }
    g.edges.push_back({"front", "logic", 1.0, true, false});
    g.edges.push_back({"logic", "cache", 1.0, true, false});
    g.entry_points = {"front"};
    g.rebuild_index();
    return g;
}

ServiceGraph random_dag(Rng& rng, int n, double edge_p) {
    ServiceGraph g;
    for (int i = 0; i < n; ++i) {
        Microservice ms;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "svc-%02d", i);
        ms.id = buf;
        ms.profile.mean_ms = 1.0;
        ms.worker_count = 1;
        g.microservices.push_back(ms);
    }
    // Edges only from lower to higher index: guaranteed DAG.
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.uniform() < edge_p)
                g.edges.push_back({g.microservices[i].id, g.microservices[j].id, 0.5, true, false});
    g.entry_points = {g.microservices[0].id};
    g.rebuild_index();
    return g;
}

// Brute-force cycle enumeration up to a length cap: DFS over simple paths.
void brute_cycles_dfs(const std::vector<std::vector<int>>& adj, int root, int v,
                      std::vector<int>& path, std::vector<char>& on_path, int max_len,
                      std::set<std::vector<int>>& found) {
    if (static_cast<int>(path.size()) > max_len) return;
    for (int w : adj[v]) {
        if (w == root && path.size() >= 2) {
            std::vector<int> cyc = path;
            std::rotate(cyc.begin(), std::min_element(cyc.begin(), cyc.end()), cyc.end());
            found.insert(cyc);
        } else if (!on_path[w] && w > root) {
            on_path[w] = 1;
            path.push_back(w);
            brute_cycles_dfs(adj, root, w, path, on_path, max_len, found);
            path.pop_back();
            on_path[w] = 0;
        }
    }
}

std::set<std::vector<int>> brute_cycles(const ServiceGraph& g, int max_len) {
    int n = static_cast<int>(g.microservices.size());
    std::vector<std::vector<int>> adj(n);
    for (const auto& e : g.edges)
        adj[*g.index_of(e.from)].push_back(static_cast<int>(*g.index_of(e.to)));
    std::set<std::vector<int>> found;
    for (int s = 0; s < n; ++s) {
        std::vector<int> path{s};
        std::vector<char> on_path(n, 0);
        on_path[s] = 1;
        brute_cycles_dfs(adj, s, s, path, on_path, max_len, found);
    }
    return found;
}

} // namespace

TEST_CASE("single microservice with no edges is valid") {
    ServiceGraph g;
    Microservice ms;
    ms.id = "solo";
    ms.profile.mean_ms = 2.0;
    ms.worker_count = 1;
    g.microservices.push_back(ms);
    g.entry_points = {"solo"};
    g.rebuild_index();
    CHECK(validate_graph(g).valid());
    CHECK(topological_order(g) == std::vector<std::string>{"solo"});
}

TEST_CASE("dangling edge is reported") {
    ServiceGraph g = chain_graph();
    g.edges.push_back({"logic", "X", 1.0, true, false});
    auto report = validate_graph(g);
    CHECK_FALSE(report.valid());
    bool found = false;
    for (const auto& i : report.issues)
        if (i.what.find("dangling") != std::string::npos &&
            i.what.find("X") != std::string::npos)
            found = true;
    CHECK(found);
}

TEST_CASE("invariant violations are reported") {
    ServiceGraph g = chain_graph();
    g.microservices[0].worker_count = 0;
    g.microservices[1].profile.mean_ms = -1;
    at(g.microservices[2].sensitivity, Resource::Cpu) = 1.5;
    auto report = validate_graph(g);
    CHECK(report.issues.size() >= 3);
}

TEST_CASE("presets match the published microservice counts") {
    CHECK(social_network_preset().microservices.size() == 36);
    CHECK(media_service_preset().microservices.size() == 38);
    CHECK(ecommerce_preset().microservices.size() == 41);
    CHECK(banking_preset().microservices.size() == 28);
    CHECK(hotel_reservation_preset().microservices.size() == 15);
    for (const auto& name : preset_names()) {
        auto g = preset_by_name(name);
        INFO(name);
        CHECK(validate_graph(g).valid());
    }
}

TEST_CASE("chain orders back-end first") {
    ServiceGraph g = chain_graph();
    auto order = topological_order(g);
    CHECK(order == std::vector<std::string>{"cache", "logic", "front"});
}

TEST_CASE("topological order is a deterministic permutation with edges pointing backwards") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        ServiceGraph g = random_dag(rng, 20, 0.15);
        auto order = topological_order(g);
        CHECK(order.size() == g.microservices.size());
        std::set<std::string> uniq(order.begin(), order.end());
        CHECK(uniq.size() == order.size());
        std::unordered_map<std::string, int> pos;
        for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<int>(i);
        // Exhaustive edge check: every callee precedes its caller.
        for (const auto& e : g.edges) CHECK(pos[e.to] < pos[e.from]);
        CHECK(topological_order(g) == order); // idempotent & deterministic
    }
}

TEST_CASE("cycle detection: DAG has none, planted cycle is found") {
    ServiceGraph g = chain_graph();
    CHECK(detect_cycles(g).empty());

    g.edges.push_back({"cache", "front", 1.0, true, true}); // injected back edge
    auto cycles = detect_cycles(g);
    REQUIRE(cycles.size() == 1);
    CHECK(cycles[0] == std::vector<std::string>{"cache", "front", "logic"});
    // Injected cycles do not invalidate the graph.
    CHECK(validate_graph(g).valid());
    // Order still covers every node exactly once.
    auto order = topological_order(g);
    CHECK(order.size() == 3);
}

TEST_CASE("cycle detection matches brute-force enumeration on random graphs") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        ServiceGraph g = random_dag(rng, 12, 0.12);
        // Plant two cycles: forward paths plus injected back edges.
        g.edges.push_back({g.microservices[2].id, g.microservices[5].id, 1.0, true, false});
        g.edges.push_back({g.microservices[5].id, g.microservices[7].id, 1.0, true, false});
        g.edges.push_back({g.microservices[4].id, g.microservices[10].id, 1.0, true, false});
        g.edges.push_back({g.microservices[7].id, g.microservices[2].id, 1.0, true, true});
        g.edges.push_back({g.microservices[10].id, g.microservices[4].id, 1.0, true, true});
        auto got = detect_cycles(g);
        auto want = brute_cycles(g, 6);
        std::set<std::vector<int>> got_set;
        for (const auto& cyc : got) {
            if (cyc.size() > 6) continue;
            std::vector<int> ids;
            for (const auto& id : cyc) ids.push_back(static_cast<int>(*g.index_of(id)));
            std::rotate(ids.begin(), std::min_element(ids.begin(), ids.end()), ids.end());
            got_set.insert(ids);
        }
        CHECK(got_set == want);
        CHECK(got.size() >= 2);
    }
}

TEST_CASE("graph file round-trips losslessly") {
    auto g = social_network_preset();
    g.microservices[3].profile.mean_ms = 1.2345678901234567;
    std::ostringstream os;
    write_graph(os, g);
    std::istringstream is(os.str());
    auto g2 = read_graph(is);
    std::ostringstream os2;
    write_graph(os2, g2);
    CHECK(os.str() == os2.str());
    CHECK(g2.microservices.size() == g.microservices.size());
    CHECK(g2.qos.latency_ms == g.qos.latency_ms);
    CHECK(g2.microservices[3].profile.mean_ms == g.microservices[3].profile.mean_ms);
}

TEST_CASE("autoplace covers every microservice and sizes capacity to target") {
    auto g = social_network_preset();
    auto placement = autoplace(g, 8, 100.0, 0.5);
    CHECK(placement.validate(g).valid());
    CHECK(placement.nodes.size() == 8);
    // Demand at nominal load stays at or below the target on every node.
    auto rates = visit_rates(g, 100.0);
    std::vector<ResourceVec> demand(8, zero_resources());
    for (const auto& ms : g.microservices) {
        auto node = placement.node_index(placement.assignment.at(ms.id));
        double busy = rates.at(ms.id) * ms.profile.mean_ms / 1000.0;
        for (Resource r : all_resources())
            at(demand[*node], r) += busy * at(ms.sensitivity, r);
    }
    for (std::size_t n = 0; n < demand.size(); ++n)
        for (Resource r : all_resources())
            CHECK(at(demand[n], r) / at(placement.nodes[n].capacity, r) <= 0.5 + 1e-9);
}

TEST_CASE("visit rates follow the traffic equations on a chain") {
    ServiceGraph g = chain_graph();
    g.edges[1].probability = 0.25;
    auto rates = visit_rates(g, 100.0);
    CHECK(rates["front"] == doctest::Approx(100.0));
    CHECK(rates["logic"] == doctest::Approx(100.0));
    CHECK(rates["cache"] == doctest::Approx(25.0));
}

TEST_CASE("ordering hash distinguishes different orders") {
    auto a = ordering_hash({"a", "b", "c"});
    auto b = ordering_hash({"a", "c", "b"});
    auto c = ordering_hash({"a", "b", "c"});
    CHECK(a != b);
    CHECK(a == c);
}
