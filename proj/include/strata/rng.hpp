#pragma once

#include <cstdint>
#include <vector>

namespace strata {

/// SplitMix64 stream. Every derived quantity (uniforms, Box-Muller normals,
/// shuffles, sub-seeds) is defined here so that runs are reproducible across
/// compilers and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double normal();
    bool bernoulli(double p) { return uniform() < p; }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    /// Fisher-Yates permutation.
    void shuffle(std::vector<int>& v);

    /// Seed of an independent stream, e.g. one per replication.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index);

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace strata
