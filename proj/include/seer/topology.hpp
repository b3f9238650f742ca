#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "seer/common.hpp"

namespace seer::topo {

enum class Tier { FrontEnd, Logic, Caching, Storage };
enum class FanoutMode { Sequential, ParallelJoin, FireAndForget };
enum class DistKind { Exponential, LogNormal };

std::string_view tier_name(Tier t);
Tier tier_from_name(std::string_view s);
std::string_view fanout_name(FanoutMode m);
FanoutMode fanout_from_name(std::string_view s);
std::string_view dist_name(DistKind d);
DistKind dist_from_name(std::string_view s);

// Base service-time distribution, milliseconds.
struct ServiceProfile {
    double mean_ms = 1.0;
    double dispersion = 1.0; // sigma of underlying normal for log-normal draws
    DistKind kind = DistKind::Exponential;
};

struct Microservice {
    std::string id;
    Tier tier = Tier::Logic;
    ServiceProfile profile;
    int worker_count = 1;
    FanoutMode fanout = FanoutMode::Sequential;
    ResourceVec sensitivity = zero_resources(); // each in [0,1]
    // Per-request packet intake cost (kernel + event loop), microseconds.
    // Presets calibrate this against their nominal load; see
    // sim::calibrate_intake.
    double intake_us = 25.0;
};

struct Edge {
    std::string from;
    std::string to;
    double probability = 1.0; // per-request call probability
    bool blocking = true;     // caller waits for the response
    bool injected = false;    // planted by fault injection; exempt from DAG check
};

struct QosTarget {
    double latency_ms = 100.0;
    double percentile = 0.99;
};

struct ValidationIssue {
    std::string where;
    std::string what;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool valid() const { return issues.empty(); }
    std::string to_string() const;
};

class ServiceGraph {
  public:
    std::vector<Microservice> microservices;
    std::vector<Edge> edges;
    std::vector<std::string> entry_points;
    QosTarget qos;

    std::size_t size() const { return microservices.size(); }
    // Index of a microservice id, or nullopt.
    std::optional<std::size_t> index_of(std::string_view id) const;
    const Microservice& at(std::string_view id) const;
    // Outgoing edges of one microservice (indices into edges).
    std::vector<std::size_t> out_edges(std::string_view id) const;

    void rebuild_index();

  private:
    mutable std::unordered_map<std::string, std::size_t> index_;
    mutable bool index_fresh_ = false;
};

// Report-based invariant checking; an empty report means the graph is valid.
ValidationReport validate_graph(const ServiceGraph& graph);

// Back-end-first total order: for every caller->callee edge, the callee
// precedes the caller. Ties broken lexicographically by id, which fixes the
// predictor's neuron ordering across runs. Injected cycles are collapsed to
// strongly-connected components and ordered as units (members sorted by id).
std::vector<std::string> topological_order(const ServiceGraph& graph);

// All elementary cycles (Johnson). A DAG yields an empty list. Each cycle is
// reported starting from its lexicographically smallest member.
std::vector<std::vector<std::string>> detect_cycles(const ServiceGraph& graph);

std::uint64_t ordering_hash(const std::vector<std::string>& order);

// Simulated cluster nodes and the microservice -> node assignment.
struct NodeSpec {
    std::string id;
    ResourceVec capacity; // abstract units, all > 0
};

struct Placement {
    std::vector<NodeSpec> nodes;
    std::unordered_map<std::string, std::string> assignment; // microservice -> node

    std::optional<std::size_t> node_index(std::string_view node_id) const;
    ValidationReport validate(const ServiceGraph& graph) const;
};

// Steady-state visit rate per microservice for a given external arrival rate,
// from the traffic equations over the DAG (requests split uniformly across
// entry points).
std::unordered_map<std::string, double> visit_rates(const ServiceGraph& graph,
                                                    double arrivals_per_s);

// Deterministic first-fit-decreasing placement over `node_count` identical
// nodes, with capacities sized so that no resource exceeds `target_util`
// at the given external load.
Placement autoplace(const ServiceGraph& graph, int node_count, double arrivals_per_s,
                    double target_util = 0.5);

// Preset graphs shaped like production deployments described in the
// literature: load balancer -> front-ends -> fanout logic tiers -> caches ->
// databases. Node counts: social 36, media 38, ecommerce 41, banking 28,
// hotel 15.
ServiceGraph social_network_preset();
ServiceGraph media_service_preset();
ServiceGraph ecommerce_preset();
ServiceGraph banking_preset();
ServiceGraph hotel_reservation_preset();

// Preset lookup by name ("social-network", "media-service", "e-commerce",
// "banking", "hotel-reservation").
ServiceGraph preset_by_name(std::string_view name);
std::vector<std::string> preset_names();

// Line-based graph definition file; round-trips losslessly.
void write_graph(std::ostream& out, const ServiceGraph& graph);
ServiceGraph read_graph(std::istream& in);
void save_graph(const std::string& path, const ServiceGraph& graph);
ServiceGraph load_graph(const std::string& path);

} // namespace seer::topo
