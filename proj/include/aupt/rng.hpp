#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace aupt {

/// Seeded random stream. Wraps mt19937_64 but maps raw bits to doubles
/// itself, so corpora and checkpoints are reproducible bit-for-bit across
/// standard-library implementations (std::*_distribution is not portable).
class Rng {
 public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Derive the seed of a named sub-stream from a base seed. All
    /// randomness in a run flows from one seed through these streams.
    static std::uint64_t substream(std::uint64_t seed, std::string_view name);

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller (pairwise, cached).
    double normal();

    std::vector<double> normal_vec(std::size_t n);

    /// Fisher-Yates shuffle of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

 private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace aupt
