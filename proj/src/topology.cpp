#include "seer/topology.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <sstream>

namespace seer {

std::string_view resource_name(Resource r) {
    switch (r) {
        case Resource::Cpu: return "cpu";
        case Resource::Cache: return "cache";
        case Resource::MemoryBw: return "membw";
        case Resource::MemoryCap: return "memcap";
        case Resource::NetworkBw: return "netbw";
        case Resource::DiskIo: return "disk";
    }
    return "?";
}

Resource resource_from_name(std::string_view name) {
    for (Resource r : all_resources())
        if (resource_name(r) == name) return r;
    throw std::invalid_argument("unknown resource: " + std::string(name));
}

} // namespace seer

namespace seer::topo {

std::string_view tier_name(Tier t) {
    switch (t) {
        case Tier::FrontEnd: return "front-end";
        case Tier::Logic: return "logic";
        case Tier::Caching: return "caching";
        case Tier::Storage: return "storage";
    }
    return "?";
}

Tier tier_from_name(std::string_view s) {
    if (s == "front-end") return Tier::FrontEnd;
    if (s == "logic") return Tier::Logic;
    if (s == "caching") return Tier::Caching;
    if (s == "storage") return Tier::Storage;
    throw std::invalid_argument("unknown tier: " + std::string(s));
}

std::string_view fanout_name(FanoutMode m) {
    switch (m) {
        case FanoutMode::Sequential: return "sequential";
        case FanoutMode::ParallelJoin: return "parallel-join";
        case FanoutMode::FireAndForget: return "fire-and-forget";
    }
    return "?";
}

FanoutMode fanout_from_name(std::string_view s) {
    if (s == "sequential") return FanoutMode::Sequential;
    if (s == "parallel-join") return FanoutMode::ParallelJoin;
    if (s == "fire-and-forget") return FanoutMode::FireAndForget;
    throw std::invalid_argument("unknown fanout mode: " + std::string(s));
}

std::string_view dist_name(DistKind d) {
    switch (d) {
        case DistKind::Exponential: return "exp";
        case DistKind::LogNormal: return "lognormal";
    }
    return "?";
}

DistKind dist_from_name(std::string_view s) {
    if (s == "exp") return DistKind::Exponential;
    if (s == "lognormal") return DistKind::LogNormal;
    throw std::invalid_argument("unknown distribution: " + std::string(s));
}

std::string ValidationReport::to_string() const {
    std::ostringstream os;
    for (const auto& i : issues) os << i.where << ": " << i.what << "\n";
    return os.str();
}

void ServiceGraph::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < microservices.size(); ++i)
        index_[microservices[i].id] = i;
    index_fresh_ = true;
}

std::optional<std::size_t> ServiceGraph::index_of(std::string_view id) const {
    if (!index_fresh_ || index_.size() != microservices.size()) {
        const_cast<ServiceGraph*>(this)->rebuild_index();
    }
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const Microservice& ServiceGraph::at(std::string_view id) const {
    auto idx = index_of(id);
    if (!idx) throw std::out_of_range("no microservice: " + std::string(id));
    return microservices[*idx];
}

std::vector<std::size_t> ServiceGraph::out_edges(std::string_view id) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < edges.size(); ++i)
        if (edges[i].from == id) out.push_back(i);
    return out;
}

ValidationReport validate_graph(const ServiceGraph& graph) {
    ValidationReport report;
    auto add = [&](std::string where, std::string what) {
        report.issues.push_back({std::move(where), std::move(what)});
    };

    std::set<std::string> ids;
    for (const auto& ms : graph.microservices) {
        if (ms.id.empty()) add("microservice", "empty id");
        if (!ids.insert(ms.id).second) add(ms.id, "duplicate id");
        if (ms.worker_count < 1) add(ms.id, "worker_count must be >= 1");
        if (ms.profile.mean_ms <= 0) add(ms.id, "service-time mean must be > 0");
        if (ms.profile.dispersion < 0) add(ms.id, "dispersion must be >= 0");
        if (ms.intake_us <= 0) add(ms.id, "intake_us must be > 0");
        for (Resource r : all_resources()) {
            double s = at(ms.sensitivity, r);
            if (s < 0.0 || s > 1.0)
                add(ms.id, "sensitivity " + std::string(resource_name(r)) +
                               " outside [0,1]");
        }
    }

    for (const auto& e : graph.edges) {
        std::string label = e.from + "->" + e.to;
        if (!ids.count(e.from)) add(label, "dangling edge: unknown source '" + e.from + "'");
        if (!ids.count(e.to)) add(label, "dangling edge: unknown target '" + e.to + "'");
        if (e.probability < 0.0 || e.probability > 1.0)
            add(label, "call probability outside [0,1]");
        if (e.from == e.to) add(label, "self edge");
    }

    if (graph.entry_points.empty()) add("graph", "no entry points");
    for (const auto& ep : graph.entry_points)
        if (!ids.count(ep)) add(ep, "entry point is not a microservice");

    if (graph.qos.latency_ms <= 0) add("qos", "latency target must be > 0");
    if (graph.qos.percentile <= 0 || graph.qos.percentile >= 1)
        add("qos", "percentile must be in (0,1)");

    // The nominal graph (injected edges excluded) must be a DAG.
    if (report.valid()) {
        std::size_t n = graph.microservices.size();
        std::vector<std::vector<std::size_t>> adj(n);
        std::vector<int> indeg(n, 0);
        for (const auto& e : graph.edges) {
            if (e.injected) continue;
            auto u = graph.index_of(e.from);
            auto v = graph.index_of(e.to);
            adj[*u].push_back(*v);
            ++indeg[*v];
        }
        std::queue<std::size_t> q;
        for (std::size_t i = 0; i < n; ++i)
            if (indeg[i] == 0) q.push(i);
        std::size_t seen = 0;
        while (!q.empty()) {
            std::size_t u = q.front();
            q.pop();
            ++seen;
            for (std::size_t v : adj[u])
                if (--indeg[v] == 0) q.push(v);
        }
        if (seen != n) add("graph", "cycle among non-injected edges");
    }
    return report;
}

namespace {

// Tarjan strongly-connected components over all edges (injected included).
struct SccResult {
    std::vector<int> comp;  // vertex -> component id
    int count = 0;
};

SccResult tarjan_scc(std::size_t n, const std::vector<std::vector<std::size_t>>& adj) {
    SccResult res;
    res.comp.assign(n, -1);
    std::vector<int> low(n, 0), num(n, -1);
    std::vector<std::size_t> stk;
    std::vector<char> on_stack(n, 0);
    int counter = 0;

    // Iterative Tarjan to avoid deep recursion on long chains.
    struct Frame {
        std::size_t v;
        std::size_t edge = 0;
    };
    for (std::size_t root = 0; root < n; ++root) {
        if (num[root] != -1) continue;
        std::vector<Frame> frames{{root}};
        while (!frames.empty()) {
            Frame& f = frames.back();
            std::size_t v = f.v;
            if (f.edge == 0) {
                num[v] = low[v] = counter++;
                stk.push_back(v);
                on_stack[v] = 1;
            }
            if (f.edge < adj[v].size()) {
                std::size_t w = adj[v][f.edge++];
                if (num[w] == -1) {
                    frames.push_back({w});
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], num[w]);
                }
            } else {
                if (low[v] == num[v]) {
                    while (true) {
                        std::size_t w = stk.back();
                        stk.pop_back();
                        on_stack[w] = 0;
                        res.comp[w] = res.count;
                        if (w == v) break;
                    }
                    ++res.count;
                }
                frames.pop_back();
                if (!frames.empty()) {
                    std::size_t parent = frames.back().v;
                    low[parent] = std::min(low[parent], low[v]);
                }
            }
        }
    }
    return res;
}

} // namespace

std::vector<std::string> topological_order(const ServiceGraph& graph) {
    ValidationReport report = validate_graph(graph);
    if (!report.valid())
        throw StageError("topology", "invalid graph:\n" + report.to_string());

    std::size_t n = graph.microservices.size();
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& e : graph.edges) {
        adj[*graph.index_of(e.from)].push_back(*graph.index_of(e.to));
    }

    SccResult scc = tarjan_scc(n, adj);

    // Condensation, reversed: callee component precedes caller component.
    std::vector<std::set<int>> rev(scc.count);
    std::vector<int> indeg(scc.count, 0);
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v : adj[u]) {
            int cu = scc.comp[u], cv = scc.comp[v];
            if (cu != cv && rev[cv].insert(cu).second) ++indeg[cu];
        }

    // Members per component, sorted by id for deterministic output.
    std::vector<std::vector<std::size_t>> members(scc.count);
    for (std::size_t i = 0; i < n; ++i) members[scc.comp[i]].push_back(i);
    auto id_of = [&](std::size_t i) -> const std::string& {
        return graph.microservices[i].id;
    };
    for (auto& m : members)
        std::sort(m.begin(), m.end(),
                  [&](std::size_t a, std::size_t b) { return id_of(a) < id_of(b); });

    // Kahn with a min-heap keyed by the component's smallest member id.
    auto key = [&](int c) -> const std::string& { return id_of(members[c][0]); };
    auto cmp = [&](int a, int b) { return key(a) > key(b); };
    std::priority_queue<int, std::vector<int>, decltype(cmp)> ready(cmp);
    for (int c = 0; c < scc.count; ++c)
        if (indeg[c] == 0) ready.push(c);

    std::vector<std::string> order;
    order.reserve(n);
    while (!ready.empty()) {
        int c = ready.top();
        ready.pop();
        for (std::size_t i : members[c]) order.push_back(id_of(i));
        for (int caller : rev[c])
            if (--indeg[caller] == 0) ready.push(caller);
    }
    return order;
}

std::vector<std::vector<std::string>> detect_cycles(const ServiceGraph& graph) {
    std::size_t n = graph.microservices.size();
    std::vector<std::set<std::size_t>> adj_set(n);
    for (const auto& e : graph.edges) {
        auto u = graph.index_of(e.from);
        auto v = graph.index_of(e.to);
        if (!u || !v || *u == *v) continue;
        adj_set[*u].insert(*v);
    }
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t i = 0; i < n; ++i) adj[i].assign(adj_set[i].begin(), adj_set[i].end());
    // Order vertices by id so each elementary cycle is emitted once, rooted
    // at its smallest member.
    std::vector<std::size_t> rank_to_vertex(n);
    for (std::size_t i = 0; i < n; ++i) rank_to_vertex[i] = i;
    std::sort(rank_to_vertex.begin(), rank_to_vertex.end(), [&](std::size_t a, std::size_t b) {
        return graph.microservices[a].id < graph.microservices[b].id;
    });
    std::vector<std::size_t> rank(n);
    for (std::size_t r = 0; r < n; ++r) rank[rank_to_vertex[r]] = r;

    std::vector<std::vector<std::string>> cycles;
    std::vector<char> on_path(n, 0);
    std::vector<std::size_t> path;

    std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t v, std::size_t root) {
        on_path[v] = 1;
        path.push_back(v);
        for (std::size_t w : adj[v]) {
            if (w == root) {
                std::vector<std::string> cyc;
                for (std::size_t x : path) cyc.push_back(graph.microservices[x].id);
                cycles.push_back(std::move(cyc));
            } else if (!on_path[w] && rank[w] > rank[root]) {
                dfs(w, root);
            }
        }
        on_path[v] = 0;
        path.pop_back();
    };

    for (std::size_t r = 0; r < n; ++r) dfs(rank_to_vertex[r], rank_to_vertex[r]);

    std::sort(cycles.begin(), cycles.end());
    return cycles;
}

std::uint64_t ordering_hash(const std::vector<std::string>& order) {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& id : order) {
        h = fnv1a(id, h);
        h = fnv1a("|", h);
    }
    return h;
}

std::optional<std::size_t> Placement::node_index(std::string_view node_id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].id == node_id) return i;
    return std::nullopt;
}

ValidationReport Placement::validate(const ServiceGraph& graph) const {
    ValidationReport report;
    for (const auto& node : nodes)
        for (Resource r : all_resources())
            if (at(node.capacity, r) <= 0)
                report.issues.push_back(
                    {node.id, "capacity " + std::string(resource_name(r)) + " must be > 0"});
    for (const auto& ms : graph.microservices) {
        auto it = assignment.find(ms.id);
        if (it == assignment.end()) {
            report.issues.push_back({ms.id, "not placed on any node"});
        } else if (!node_index(it->second)) {
            report.issues.push_back({ms.id, "placed on unknown node '" + it->second + "'"});
        }
    }
    return report;
}

std::unordered_map<std::string, double> visit_rates(const ServiceGraph& graph,
                                                    double arrivals_per_s) {
    std::unordered_map<std::string, double> rate;
    for (const auto& ms : graph.microservices) rate[ms.id] = 0.0;
    if (graph.entry_points.empty()) return rate;
    double per_entry = arrivals_per_s / static_cast<double>(graph.entry_points.size());
    for (const auto& ep : graph.entry_points) rate[ep] += per_entry;

    // Front-first propagation over the nominal DAG.
    std::vector<std::string> order = topological_order(graph);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        double from_rate = rate[*it];
        if (from_rate <= 0) continue;
        for (const auto& e : graph.edges) {
            if (e.injected || e.from != *it) continue;
            rate[e.to] += from_rate * e.probability;
        }
    }
    return rate;
}

Placement autoplace(const ServiceGraph& graph, int node_count, double arrivals_per_s,
                    double target_util) {
    if (node_count < 1) throw std::invalid_argument("node_count must be >= 1");
    auto rates = visit_rates(graph, arrivals_per_s);

    // Expected busy workers per microservice (Little's law), split into
    // per-resource demand via the sensitivity weights.
    struct Item {
        std::string id;
        ResourceVec demand;
        double cpu_demand;
    };
    std::vector<Item> items;
    for (const auto& ms : graph.microservices) {
        double busy = rates.at(ms.id) * ms.profile.mean_ms / 1000.0;
        ResourceVec d = zero_resources();
        for (Resource r : all_resources()) at(d, r) = busy * at(ms.sensitivity, r);
        items.push_back({ms.id, d, at(d, Resource::Cpu)});
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.cpu_demand != b.cpu_demand) return a.cpu_demand > b.cpu_demand;
        return a.id < b.id;
    });

    Placement placement;
    std::vector<ResourceVec> node_demand(node_count, zero_resources());
    for (int i = 0; i < node_count; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "node-%02d", i);
        placement.nodes.push_back({buf, zero_resources()});
    }
    // Greedy: put each item on the node with the least cpu demand so far.
    for (const auto& item : items) {
        int best = 0;
        for (int i = 1; i < node_count; ++i)
            if (at(node_demand[i], Resource::Cpu) < at(node_demand[best], Resource::Cpu))
                best = i;
        placement.assignment[item.id] = placement.nodes[best].id;
        for (Resource r : all_resources())
            at(node_demand[best], r) += at(item.demand, r);
    }
    // Uniform capacities sized so the most loaded node sits at target_util.
    ResourceVec cap = zero_resources();
    for (int i = 0; i < node_count; ++i)
        for (Resource r : all_resources())
            at(cap, r) = std::max(at(cap, r), at(node_demand[i], r) / target_util);
    for (Resource r : all_resources()) at(cap, r) = std::max(at(cap, r), 1.0);
    for (auto& node : placement.nodes) node.capacity = cap;
    return placement;
}

namespace {

ResourceVec tier_sensitivity(Tier t) {
    // {cpu, cache, membw, memcap, netbw, disk}
    switch (t) {
        case Tier::FrontEnd: return {0.7, 0.3, 0.3, 0.2, 0.8, 0.0};
        case Tier::Logic: return {0.9, 0.5, 0.4, 0.3, 0.4, 0.0};
        case Tier::Caching: return {0.6, 0.9, 0.8, 0.7, 0.5, 0.0};
        case Tier::Storage: return {0.4, 0.3, 0.4, 0.5, 0.3, 0.9};
    }
    return zero_resources();
}

struct GraphBuilder {
    ServiceGraph g;

    void svc(std::string id, Tier tier, double mean_ms, int workers, FanoutMode fanout) {
        Microservice ms;
        ms.id = std::move(id);
        ms.tier = tier;
        ms.profile.mean_ms = mean_ms;
        ms.profile.dispersion = 1.0;
        ms.worker_count = workers;
        ms.fanout = fanout;
        ms.sensitivity = tier_sensitivity(tier);
        g.microservices.push_back(std::move(ms));
    }
    void edge(std::string from, std::string to, double p, bool blocking = true) {
        g.edges.push_back({std::move(from), std::move(to), p, blocking, false});
    }
    void entry(std::string id) { g.entry_points.push_back(std::move(id)); }

    ServiceGraph finish(double qos_ms) {
        g.qos.latency_ms = qos_ms;
        g.qos.percentile = 0.99;
        g.rebuild_index();
        return std::move(g);
    }
};

// Wire a cache in front of its store: callers hit the cache; misses go to
// the backing database with the given probability.
void cache_pair(GraphBuilder& b, const std::string& cache, const std::string& store,
                double miss_rate = 0.3) {
    b.svc(cache, Tier::Caching, 0.6, 8, FanoutMode::Sequential);
    b.svc(store, Tier::Storage, 8.0, 6, FanoutMode::Sequential);
    b.edge(cache, store, miss_rate);
}

} // namespace

ServiceGraph social_network_preset() {
    GraphBuilder b;
    b.svc("lb", Tier::FrontEnd, 0.3, 16, FanoutMode::Sequential);
    for (const char* web : {"web-1", "web-2", "web-3"})
        b.svc(web, Tier::FrontEnd, 1.2, 8, FanoutMode::Sequential);

    // Request orchestrators.
    for (const char* s : {"compose-post", "read-timeline", "login", "search",
                          "follow-svc", "message", "favorite", "repost"})
        b.svc(s, Tier::Logic, 3.0, 8, FanoutMode::ParallelJoin);
    // Content and feature services.
    for (const char* s : {"text-svc", "media-svc", "link-shortener", "tag-svc",
                          "ads-engine", "user-recommender", "spellcheck", "auth-svc",
                          "timeline-svc", "notify-svc", "social-graph", "user-profile"})
        b.svc(s, Tier::Logic, 2.0, 6, FanoutMode::Sequential);

    cache_pair(b, "memcached-post", "mongodb-post");
    cache_pair(b, "memcached-user", "mongodb-user");
    cache_pair(b, "memcached-timeline", "mongodb-timeline");
    cache_pair(b, "memcached-media", "mongodb-media");
    cache_pair(b, "memcached-social", "mongodb-social");
    cache_pair(b, "memcached-session", "mongodb-session");

    for (const char* web : {"web-1", "web-2", "web-3"}) {
        b.edge("lb", web, 1.0 / 3.0);
        b.edge(web, "compose-post", 0.25);
        b.edge(web, "read-timeline", 0.55);
        b.edge(web, "login", 0.10);
        b.edge(web, "search", 0.12);
        b.edge(web, "follow-svc", 0.08);
        b.edge(web, "message", 0.10);
        b.edge(web, "favorite", 0.12);
        b.edge(web, "repost", 0.08);
    }
    b.edge("compose-post", "text-svc", 1.0);
    b.edge("compose-post", "media-svc", 0.4);
    b.edge("compose-post", "link-shortener", 0.3);
    b.edge("compose-post", "tag-svc", 0.5);
    b.edge("compose-post", "notify-svc", 0.9, false);
    b.edge("compose-post", "memcached-post", 1.0);
    b.edge("text-svc", "spellcheck", 0.6);
    b.edge("read-timeline", "timeline-svc", 1.0);
    b.edge("read-timeline", "ads-engine", 0.7);
    b.edge("read-timeline", "user-recommender", 0.5);
    b.edge("timeline-svc", "memcached-timeline", 1.0);
    b.edge("timeline-svc", "memcached-post", 0.8);
    b.edge("login", "auth-svc", 1.0);
    b.edge("auth-svc", "memcached-session", 1.0);
    b.edge("search", "memcached-post", 0.7);
    b.edge("search", "user-profile", 0.4);
    b.edge("follow-svc", "social-graph", 1.0);
    b.edge("message", "notify-svc", 0.8, false);
    b.edge("message", "memcached-user", 0.9);
    b.edge("favorite", "memcached-post", 1.0);
    b.edge("repost", "memcached-post", 1.0);
    b.edge("repost", "social-graph", 0.6);
    b.edge("social-graph", "memcached-social", 1.0);
    b.edge("user-profile", "memcached-user", 1.0);
    b.edge("media-svc", "memcached-media", 1.0);
    b.edge("ads-engine", "user-profile", 0.5);
    b.edge("user-recommender", "memcached-social", 0.7);
    b.entry("lb");
    return b.finish(160.0);
}

ServiceGraph media_service_preset() {
    GraphBuilder b;
    b.svc("lb", Tier::FrontEnd, 0.3, 16, FanoutMode::Sequential);
    for (const char* web : {"web-1", "web-2", "web-3"})
        b.svc(web, Tier::FrontEnd, 1.2, 8, FanoutMode::Sequential);
    for (const char* s : {"browse-movie", "search", "login", "review-compose",
                          "rent-movie", "stream-start", "rate-movie", "plot-svc"})
        b.svc(s, Tier::Logic, 3.0, 8, FanoutMode::ParallelJoin);
    for (const char* s : {"auth-svc", "payment-auth", "video-chunker", "photo-svc",
                          "review-rank", "recommender", "cast-info", "funds-check",
                          "subtitle-svc", "watchlist", "trailer-svc", "thumbnail-svc",
                          "genre-svc", "top-list"})
        b.svc(s, Tier::Logic, 2.0, 6, FanoutMode::Sequential);

    cache_pair(b, "memcached-movie", "mysql-movie");
    cache_pair(b, "memcached-review", "mongodb-review");
    cache_pair(b, "memcached-user", "mongodb-user");
    cache_pair(b, "memcached-session", "mongodb-session");
    cache_pair(b, "memcached-rating", "mongodb-rating");
    b.svc("nfs-video", Tier::Storage, 10.0, 6, FanoutMode::Sequential);
    b.svc("memcached-chunk", Tier::Caching, 0.6, 8, FanoutMode::Sequential);
    b.edge("memcached-chunk", "nfs-video", 0.35);

    for (const char* web : {"web-1", "web-2", "web-3"}) {
        b.edge("lb", web, 1.0 / 3.0);
        b.edge(web, "browse-movie", 0.45);
        b.edge(web, "search", 0.25);
        b.edge(web, "login", 0.10);
        b.edge(web, "review-compose", 0.12);
        b.edge(web, "rent-movie", 0.08);
        b.edge(web, "stream-start", 0.18);
        b.edge(web, "rate-movie", 0.10);
    }
    b.edge("browse-movie", "plot-svc", 0.8);
    b.edge("browse-movie", "cast-info", 0.6);
    b.edge("browse-movie", "photo-svc", 0.5);
    b.edge("browse-movie", "trailer-svc", 0.3);
    b.edge("browse-movie", "genre-svc", 0.4);
    b.edge("browse-movie", "top-list", 0.3);
    b.edge("browse-movie", "memcached-movie", 1.0);
    b.edge("trailer-svc", "memcached-chunk", 0.8);
    b.edge("thumbnail-svc", "memcached-chunk", 0.9);
    b.edge("photo-svc", "thumbnail-svc", 0.6);
    b.edge("genre-svc", "memcached-movie", 0.9);
    b.edge("top-list", "memcached-rating", 0.9);
    b.edge("plot-svc", "memcached-movie", 1.0);
    b.edge("cast-info", "memcached-movie", 0.9);
    b.edge("photo-svc", "memcached-chunk", 0.7);
    b.edge("search", "memcached-movie", 1.0);
    b.edge("search", "recommender", 0.5);
    b.edge("recommender", "memcached-rating", 0.8);
    b.edge("login", "auth-svc", 1.0);
    b.edge("auth-svc", "memcached-session", 1.0);
    b.edge("review-compose", "review-rank", 0.7);
    b.edge("review-compose", "memcached-review", 1.0);
    b.edge("review-rank", "memcached-review", 0.8);
    b.edge("rent-movie", "payment-auth", 1.0);
    b.edge("rent-movie", "watchlist", 0.5);
    b.edge("payment-auth", "funds-check", 1.0);
    b.edge("funds-check", "memcached-user", 0.9);
    b.edge("stream-start", "video-chunker", 1.0);
    b.edge("stream-start", "subtitle-svc", 0.4);
    b.edge("video-chunker", "memcached-chunk", 1.0);
    b.edge("rate-movie", "memcached-rating", 1.0);
    b.edge("watchlist", "memcached-user", 1.0);
    b.entry("lb");
    return b.finish(170.0);
}

ServiceGraph ecommerce_preset() {
    GraphBuilder b;
    b.svc("lb", Tier::FrontEnd, 0.3, 16, FanoutMode::Sequential);
    for (const char* web : {"front-1", "front-2", "front-3"})
        b.svc(web, Tier::FrontEnd, 1.4, 8, FanoutMode::Sequential);
    for (const char* s : {"catalogue", "orders", "cart", "login", "shipping",
                          "payment", "invoice", "wishlist", "checkout", "browse"})
        b.svc(s, Tier::Logic, 3.0, 8, FanoutMode::ParallelJoin);
    for (const char* s : {"queue-master", "recommender", "stock-check", "tax-calc",
                          "discount-svc", "address-svc", "fraud-check", "email-svc",
                          "auth-svc", "size-guide", "returns", "giftcard",
                          "currency-conv", "review-svc"})
        b.svc(s, Tier::Logic, 2.0, 6, FanoutMode::Sequential);

    cache_pair(b, "memcached-catalogue", "mongodb-catalogue");
    cache_pair(b, "memcached-cart", "mongodb-cart");
    cache_pair(b, "memcached-user", "mongodb-user");
    cache_pair(b, "memcached-order", "mongodb-order");
    cache_pair(b, "memcached-session", "mongodb-session");
    cache_pair(b, "memcached-stock", "mongodb-stock");
    b.svc("mongodb-invoice", Tier::Storage, 8.0, 6, FanoutMode::Sequential);

    for (const char* web : {"front-1", "front-2", "front-3"}) {
        b.edge("lb", web, 1.0 / 3.0);
        b.edge(web, "browse", 0.5);
        b.edge(web, "catalogue", 0.35);
        b.edge(web, "cart", 0.2);
        b.edge(web, "login", 0.1);
        b.edge(web, "checkout", 0.1);
        b.edge(web, "wishlist", 0.08);
    }
    b.edge("browse", "catalogue", 0.9);
    b.edge("browse", "recommender", 0.6);
    b.edge("browse", "size-guide", 0.2);
    b.edge("catalogue", "memcached-catalogue", 1.0);
    b.edge("catalogue", "stock-check", 0.5);
    b.edge("stock-check", "memcached-stock", 1.0);
    b.edge("recommender", "memcached-catalogue", 0.8);
    b.edge("cart", "memcached-cart", 1.0);
    b.edge("login", "auth-svc", 1.0);
    b.edge("auth-svc", "memcached-session", 1.0);
    b.edge("checkout", "orders", 1.0);
    b.edge("checkout", "discount-svc", 0.5);
    b.edge("orders", "payment", 1.0);
    b.edge("orders", "shipping", 1.0);
    b.edge("orders", "queue-master", 1.0, false);
    b.edge("orders", "memcached-order", 1.0);
    b.edge("payment", "fraud-check", 0.8);
    b.edge("payment", "tax-calc", 1.0);
    b.edge("payment", "memcached-user", 0.7);
    b.edge("shipping", "address-svc", 1.0);
    b.edge("address-svc", "memcached-user", 0.9);
    b.edge("invoice", "mongodb-invoice", 1.0);
    b.edge("queue-master", "invoice", 1.0);
    b.edge("queue-master", "email-svc", 0.9, false);
    b.edge("wishlist", "memcached-user", 0.8);
    b.edge("wishlist", "memcached-catalogue", 0.6);
    b.edge("browse", "review-svc", 0.4);
    b.edge("review-svc", "memcached-catalogue", 0.8);
    b.edge("checkout", "giftcard", 0.15);
    b.edge("checkout", "currency-conv", 0.3);
    b.edge("giftcard", "memcached-user", 0.9);
    b.edge("orders", "returns", 0.1);
    b.edge("returns", "memcached-order", 1.0);
    b.entry("lb");
    return b.finish(180.0);
}

ServiceGraph banking_preset() {
    GraphBuilder b;
    b.svc("lb", Tier::FrontEnd, 0.3, 16, FanoutMode::Sequential);
    for (const char* web : {"front-1", "front-2"})
        b.svc(web, Tier::FrontEnd, 1.4, 8, FanoutMode::Sequential);
    for (const char* s : {"login", "payments", "credit-card", "loans", "wealth-mgmt",
                          "search", "contact-rep"})
        b.svc(s, Tier::Logic, 3.2, 8, FanoutMode::ParallelJoin);
    for (const char* s : {"auth-svc", "fraud-check", "ledger-svc", "rate-quote",
                          "risk-score", "statement-gen", "notify-svc", "bank-info"})
        b.svc(s, Tier::Logic, 2.2, 6, FanoutMode::Sequential);

    cache_pair(b, "memcached-account", "mongodb-account");
    cache_pair(b, "memcached-session", "mongodb-session");
    cache_pair(b, "memcached-ledger", "mongodb-ledger");
    cache_pair(b, "memcached-info", "bankinfo-db");
    b.svc("mongodb-loans", Tier::Storage, 8.0, 6, FanoutMode::Sequential);
    b.svc("memcached-loans", Tier::Caching, 0.6, 8, FanoutMode::Sequential);
    b.edge("memcached-loans", "mongodb-loans", 0.3);

    for (const char* web : {"front-1", "front-2"}) {
        b.edge("lb", web, 0.5);
        b.edge(web, "login", 0.25);
        b.edge(web, "payments", 0.3);
        b.edge(web, "credit-card", 0.15);
        b.edge(web, "loans", 0.1);
        b.edge(web, "wealth-mgmt", 0.08);
        b.edge(web, "search", 0.2);
        b.edge(web, "contact-rep", 0.05);
    }
    b.edge("login", "auth-svc", 1.0);
    b.edge("auth-svc", "memcached-session", 1.0);
    b.edge("payments", "fraud-check", 1.0);
    b.edge("payments", "ledger-svc", 1.0);
    b.edge("payments", "notify-svc", 0.7, false);
    b.edge("ledger-svc", "memcached-ledger", 1.0);
    b.edge("fraud-check", "risk-score", 0.8);
    b.edge("risk-score", "memcached-account", 0.9);
    b.edge("credit-card", "memcached-account", 1.0);
    b.edge("credit-card", "statement-gen", 0.4);
    b.edge("statement-gen", "memcached-ledger", 1.0);
    b.edge("loans", "rate-quote", 1.0);
    b.edge("loans", "memcached-loans", 1.0);
    b.edge("rate-quote", "risk-score", 0.7);
    b.edge("wealth-mgmt", "memcached-account", 1.0);
    b.edge("search", "bank-info", 1.0);
    b.edge("bank-info", "memcached-info", 1.0);
    b.edge("contact-rep", "bank-info", 0.6);
    b.entry("lb");
    return b.finish(190.0);
}

ServiceGraph hotel_reservation_preset() {
    GraphBuilder b;
    b.svc("lb", Tier::FrontEnd, 0.3, 16, FanoutMode::Sequential);
    b.svc("front-1", Tier::FrontEnd, 1.4, 8, FanoutMode::Sequential);
    b.svc("front-2", Tier::FrontEnd, 1.4, 8, FanoutMode::Sequential);
    for (const char* s : {"search", "reserve", "user-login"})
        b.svc(s, Tier::Logic, 3.0, 8, FanoutMode::ParallelJoin);
    for (const char* s : {"geo-svc", "rate-svc", "profile-svc", "recommend-svc", "ads-svc"})
        b.svc(s, Tier::Logic, 2.0, 6, FanoutMode::Sequential);
    cache_pair(b, "memcached-hotel", "mongodb-hotel");
    cache_pair(b, "memcached-user", "mongodb-user");

    for (const char* web : {"front-1", "front-2"}) {
        b.edge("lb", web, 0.5);
        b.edge(web, "search", 0.6);
        b.edge(web, "reserve", 0.2);
        b.edge(web, "user-login", 0.15);
    }
    b.edge("search", "geo-svc", 1.0);
    b.edge("search", "rate-svc", 1.0);
    b.edge("search", "recommend-svc", 0.5);
    b.edge("search", "ads-svc", 0.4, false);
    b.edge("geo-svc", "memcached-hotel", 1.0);
    b.edge("rate-svc", "memcached-hotel", 1.0);
    b.edge("recommend-svc", "memcached-hotel", 0.8);
    b.edge("reserve", "rate-svc", 0.8);
    b.edge("reserve", "profile-svc", 1.0);
    b.edge("profile-svc", "memcached-user", 1.0);
    b.edge("user-login", "profile-svc", 1.0);
    b.entry("lb");
    return b.finish(150.0);
}

ServiceGraph preset_by_name(std::string_view name) {
    if (name == "social-network") return social_network_preset();
    if (name == "media-service") return media_service_preset();
    if (name == "e-commerce") return ecommerce_preset();
    if (name == "banking") return banking_preset();
    if (name == "hotel-reservation") return hotel_reservation_preset();
    throw std::invalid_argument("unknown preset: " + std::string(name));
}

std::vector<std::string> preset_names() {
    return {"social-network", "media-service", "e-commerce", "banking", "hotel-reservation"};
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// key=value tokens on one line.
std::map<std::string, std::string> parse_fields(const std::string& line, std::size_t skip) {
    std::map<std::string, std::string> fields;
    std::istringstream is(line);
    std::string tok;
    for (std::size_t i = 0; i < skip; ++i) is >> tok;
    while (is >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos)
            throw StageError("topology", "bad field '" + tok + "' in: " + line);
        fields[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return fields;
}

double field_num(const std::map<std::string, std::string>& f, const std::string& key) {
    auto it = f.find(key);
    if (it == f.end()) throw StageError("topology", "missing field " + key);
    return std::stod(it->second);
}

std::string field_str(const std::map<std::string, std::string>& f, const std::string& key) {
    auto it = f.find(key);
    if (it == f.end()) throw StageError("topology", "missing field " + key);
    return it->second;
}

} // namespace

void write_graph(std::ostream& out, const ServiceGraph& graph) {
    out << "seer-graph v1\n";
    out << "qos target_ms=" << fmt_double(graph.qos.latency_ms)
        << " percentile=" << fmt_double(graph.qos.percentile) << "\n";
    for (const auto& ms : graph.microservices) {
        out << "service id=" << ms.id << " tier=" << tier_name(ms.tier)
            << " dist=" << dist_name(ms.profile.kind)
            << " mean_ms=" << fmt_double(ms.profile.mean_ms)
            << " dispersion=" << fmt_double(ms.profile.dispersion)
            << " workers=" << ms.worker_count << " fanout=" << fanout_name(ms.fanout)
            << " intake_us=" << fmt_double(ms.intake_us) << " sens=";
        bool first = true;
        for (Resource r : all_resources()) {
            if (!first) out << ",";
            out << resource_name(r) << ":" << fmt_double(at(ms.sensitivity, r));
            first = false;
        }
        out << "\n";
    }
    for (const auto& e : graph.edges) {
        out << "edge from=" << e.from << " to=" << e.to << " p=" << fmt_double(e.probability)
            << " blocking=" << (e.blocking ? 1 : 0);
        if (e.injected) out << " injected=1";
        out << "\n";
    }
    for (const auto& ep : graph.entry_points) out << "entry " << ep << "\n";
}

ServiceGraph read_graph(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "seer-graph v1")
        throw StageError("topology", "not a seer-graph v1 file");
    ServiceGraph g;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string kind;
        is >> kind;
        if (kind == "qos") {
            auto f = parse_fields(line, 1);
            g.qos.latency_ms = field_num(f, "target_ms");
            g.qos.percentile = field_num(f, "percentile");
        } else if (kind == "service") {
            auto f = parse_fields(line, 1);
            Microservice ms;
            ms.id = field_str(f, "id");
            ms.tier = tier_from_name(field_str(f, "tier"));
            ms.profile.kind = dist_from_name(field_str(f, "dist"));
            ms.profile.mean_ms = field_num(f, "mean_ms");
            ms.profile.dispersion = field_num(f, "dispersion");
            ms.worker_count = static_cast<int>(field_num(f, "workers"));
            ms.fanout = fanout_from_name(field_str(f, "fanout"));
            ms.intake_us = field_num(f, "intake_us");
            std::istringstream ss(field_str(f, "sens"));
            std::string part;
            while (std::getline(ss, part, ',')) {
                auto colon = part.find(':');
                if (colon == std::string::npos)
                    throw StageError("topology", "bad sensitivity '" + part + "'");
                Resource r = resource_from_name(part.substr(0, colon));
                at(ms.sensitivity, r) = std::stod(part.substr(colon + 1));
            }
            g.microservices.push_back(std::move(ms));
        } else if (kind == "edge") {
            auto f = parse_fields(line, 1);
            Edge e;
            e.from = field_str(f, "from");
            e.to = field_str(f, "to");
            e.probability = field_num(f, "p");
            e.blocking = field_num(f, "blocking") != 0;
            if (f.count("injected")) e.injected = field_num(f, "injected") != 0;
            g.edges.push_back(std::move(e));
        } else if (kind == "entry") {
            std::string id;
            is >> id;
            g.entry_points.push_back(id);
        } else {
            throw StageError("topology", "unknown record '" + kind + "'");
        }
    }
    g.rebuild_index();
    return g;
}

void save_graph(const std::string& path, const ServiceGraph& graph) {
    std::ofstream out(path);
    if (!out) throw StageError("topology", "cannot write " + path);
    write_graph(out, graph);
}

ServiceGraph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StageError("topology", "cannot read " + path);
    return read_graph(in);
}

} // namespace seer::topo
