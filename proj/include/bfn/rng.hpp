#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "bfn/complexlin.hpp"

namespace bfn {

/// SplitMix64 finaliser (Steele, Lea, Flood). Constants:
///   increment 0x9E3779B97F4A7C15, multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB,
///   shifts 30, 27, 31.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seed for sample `index` of a dataset drawn with `base_seed`.
constexpr std::uint64_t stream_seed(std::uint64_t base_seed, std::uint64_t index) noexcept {
    return mix64(base_seed ^ mix64(index + 0x9E3779B97F4A7C15ULL));
}

/// Counter-based generator: the n-th output is mix64(seed + n·0x9E3779B97F4A7C15).
/// Normals use the Box-Muller transform so streams are identical across
/// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept : seed_(seed) {}

    std::uint64_t next_u64() noexcept {
        ++counter_;
        return mix64(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next_u64() % n; }

    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phase = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(phase);
        has_spare_ = true;
        return r * std::cos(phase);
    }

    /// Circular complex Gaussian CN(0, variance).
    cplx complex_normal(double variance = 1.0) noexcept {
        const double s = std::sqrt(variance / 2.0);
        const double re = normal();
        const double im = normal();
        return {s * re, s * im};
    }

    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace bfn
