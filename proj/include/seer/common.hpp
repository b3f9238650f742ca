#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace seer {

// Simulated clock: integer microseconds internally, milliseconds (double) at
// every public interface. Integer ticks keep event ordering exact.
using Micros = std::int64_t;

inline Micros us_from_ms(double ms) {
    return static_cast<Micros>(std::llround(ms * 1000.0));
}
inline double ms_from_us(Micros us) { return static_cast<double>(us) / 1000.0; }

// Shared node resources a microservice can be sensitive to.
enum class Resource : int {
    Cpu = 0,
    Cache = 1,
    MemoryBw = 2,
    MemoryCap = 3,
    NetworkBw = 4,
    DiskIo = 5,
};
constexpr int kResourceCount = 6;

constexpr std::array<Resource, kResourceCount> all_resources() {
    return {Resource::Cpu,      Resource::Cache,     Resource::MemoryBw,
            Resource::MemoryCap, Resource::NetworkBw, Resource::DiskIo};
}

std::string_view resource_name(Resource r);
Resource resource_from_name(std::string_view name);

// Per-resource vector of doubles (sensitivities, utilizations, capacities).
using ResourceVec = std::array<double, kResourceCount>;

constexpr ResourceVec zero_resources() { return {0, 0, 0, 0, 0, 0}; }

inline double& at(ResourceVec& v, Resource r) { return v[static_cast<int>(r)]; }
inline double at(const ResourceVec& v, Resource r) { return v[static_cast<int>(r)]; }

// Seeded RNG with distribution sampling done by hand so results depend only
// on the mt19937_64 stream, not on the standard library's distribution
// implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Exponential with the given mean, via inverse CDF.
    double exponential(double mean) { return -mean * std::log1p(-uniform()); }

    // Standard normal via Box-Muller (always consumes two uniforms).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Log-normal parameterized by its mean and the sigma of the underlying
    // normal ("dispersion").
    double lognormal(double mean, double sigma) {
        double mu = std::log(mean) - 0.5 * sigma * sigma;
        return std::exp(mu + sigma * normal());
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

  private:
    std::mt19937_64 engine_;
};

// Shared percentile definition: value at index ceil(p*n)-1 of the sorted
// sample. Every p99 in the pipeline uses this.
inline double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile of empty sample");
    std::size_t k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
    if (k == 0) k = 1;
    if (k > values.size()) k = values.size();
    std::nth_element(values.begin(), values.begin() + (k - 1), values.end());
    return values[k - 1];
}

// FNV-1a, used to fingerprint topological orderings so datasets and model
// checkpoints can refuse mismatched topologies.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Stage-tagged failure; the CLI maps the tag to its exit diagnostics.
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, const std::string& message)
        : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

} // namespace seer
