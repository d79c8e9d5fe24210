#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lire/config.hpp"

namespace lire {

// Deterministic PRNG (splitmix64) with explicit distributions so streams are
// reproducible across standard libraries.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }  // [0, 1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t below(std::uint64_t n) { return next() % n; }
    double gaussian();  // Box-Muller, unit normal
};

enum class Distribution : std::uint8_t { uniform, clustered_shift };

struct WorkloadSpec {
    std::uint64_t base_size = 20000;
    std::uint64_t pool_size = 20000;
    std::uint32_t epochs = 20;
    double update_rate = 0.01;  // fraction of base replaced per epoch
    Distribution distribution = Distribution::clustered_shift;
    std::uint64_t seed = 42;
    std::uint32_t dim = 16;
    ElementType element_type = ElementType::float32;

    // Shape of the clustered_shift mixture: blob_count Gaussian blobs of
    // width blob_sigma inside [0,100)^dim whose centers move drift_step per
    // epoch along fixed random directions.
    std::uint32_t blob_count = 8;
    double blob_sigma = 2.0;
    double drift_step = 1.0;

    double holdout_fraction = 0.01;  // queries held out of the base, never inserted

    std::uint64_t updates_per_epoch() const;
    void validate() const;
};

struct EpochStream {
    std::vector<VectorId> deletes;
    std::vector<std::pair<VectorId, Vector>> inserts;
};

struct Workload {
    std::map<VectorId, Vector> base;  // built set, holdout already removed
    std::vector<Vector> queries;      // held-out vectors
    std::vector<Vector> pool;         // insert candidates in stream order
    std::vector<EpochStream> epochs;
};

// Deterministic given the spec. Deletes draw uniformly from the live set;
// inserts take fresh ids and consume the pool in order.
Workload generate_workload(const WorkloadSpec& spec);

WorkloadSpec spec_from_kv(const std::map<std::string, std::string>& kv);

}  // namespace lire
