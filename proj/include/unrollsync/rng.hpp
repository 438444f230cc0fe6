#pragma once

#include <cstdint>
#include <optional>

namespace unrollsync {

/// Counter-based generator: the i-th draw is splitmix64_mix(key + i * golden).
/// Streams are derived from (seed, index) by hashing, one stream per sample
/// index, so generated datasets do not depend on evaluation order.
class Rng {
public:
    explicit Rng(std::uint64_t key) : key_(key) {}

    /// Independent stream for sample `index` under `seed`.
    static Rng stream(std::uint64_t seed, std::uint64_t index);

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Standard normal by Box-Muller; the second variate is cached.
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::optional<double> spare_;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

}  // namespace unrollsync
