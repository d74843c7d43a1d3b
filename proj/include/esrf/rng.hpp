#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "esrf/tensor.hpp"

namespace esrf {

// Deterministic RNG built on splitmix64. Two flavours share the mixing
// function: a sequential stream (Rng) and a counter-based hash (CounterRng)
// whose draws are addressable by index, so parallel code can regenerate the
// same noise in any order.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline double u64_to_unit(std::uint64_t x) {
    // 53-bit mantissa draw in [0,1), clamped into the open interval so that
    // -log(-log(u)) stays finite.
    double u = static_cast<double>(x >> 11) * 0x1.0p-53;
    const double eps = std::numeric_limits<double>::epsilon();
    if (u < eps) u = eps;
    if (u > 1.0 - eps) u = 1.0 - eps;
    return u;
}

/// Sequential stream generator (xorshift-mixed counter). Deterministic under
/// a fixed seed; cheap to fork into independent streams.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : state_(splitmix64(seed ^ (stream * 0x9e3779b97f4a7c15ULL))) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    /// Uniform in the open interval (0,1).
    double uniform() { return u64_to_unit(next_u64()); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n) {
        // Rejection-free multiply-shift (Lemire); bias is negligible for the
        // ranges used here but we reject the short tail anyway to keep the
        // distribution exact.
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t x = next_u64();
            __uint128_t m = static_cast<__uint128_t>(x) * n;
            if (static_cast<std::uint64_t>(m) >= threshold)
                return static_cast<std::uint64_t>(m >> 64);
        }
    }

    /// Standard normal via Box-Muller on our own uniforms.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Rng fork(std::uint64_t stream) { return Rng(next_u64(), stream); }

  private:
    std::uint64_t state_;
};

/// Counter-based generator: draw i of stream s is a pure function of
/// (seed, s, i). Backward passes regenerate forward noise from the index.
class CounterRng {
  public:
    CounterRng() = default;
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : base_(splitmix64(seed) ^ splitmix64(stream * 0x2545f4914f6cdd1dULL + 1)) {}

    double uniform_at(std::uint64_t index) const {
        return u64_to_unit(splitmix64(base_ ^ (index * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL)));
    }

    double gumbel_at(std::uint64_t index) const {
        return -std::log(-std::log(uniform_at(index)));
    }

  private:
    std::uint64_t base_ = 0;
};

/// Gumbel(0,1) sample: g = -log(-log(u)), u ~ Uniform(0,1).
inline double gumbel(Rng& rng) { return -std::log(-std::log(rng.uniform())); }

template <typename T>
Tensor<T> gumbel_sample(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor<T> out(rows, cols);
    for (auto& v : out.data) v = static_cast<T>(gumbel(rng));
    return out;
}

template <typename T>
Tensor<T> gaussian_sample(std::size_t rows, std::size_t cols, T stddev, Rng& rng) {
    Tensor<T> out(rows, cols);
    for (auto& v : out.data) v = static_cast<T>(stddev * rng.normal());
    return out;
}

}  // namespace esrf
