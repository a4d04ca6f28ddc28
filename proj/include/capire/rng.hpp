#pragma once

// Counter-based random draws for reproducible simulation.
//
// Every stochastic event in the simulator is addressed by a key tuple
// (realisation seed, agent, semester, event). The draw for a given key is
// a pure function of the key, so results never depend on worker count,
// scheduling, or on how many other events happened before. Two runs that
// share a seed but differ in shock parameters therefore see the same
// underlying uniforms (common random numbers).

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace capire::rng {

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Fold a sequence of keys into one 64-bit hash. Order-sensitive.
constexpr std::uint64_t hash_keys(std::initializer_list<std::uint64_t> keys) noexcept {
    std::uint64_t h = 0x243F6A8885A308D3ULL;
    for (auto k : keys) h = mix64(h ^ mix64(k));
    return h;
}

/// Map 64 random bits to a double in [0, 1) using the top 53 bits.
constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Sequential generator seeded from a key. Used where a short run of draws
/// belongs to one event (cohort attributes, bootstrap resamples).
class Stream {
public:
    explicit constexpr Stream(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next_u64() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    constexpr double uniform() noexcept { return to_unit(next_u64()); }

    /// Uniform integer in [0, n). Lemire's multiply-shift; bias is
    /// below 2^-40 for the n used here.
    std::uint64_t below(std::uint64_t n) noexcept {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller (one variate per call, no caching
    /// so draw counts stay a fixed function of the call sequence).
    double normal() noexcept {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

private:
    std::uint64_t state_;
};

/// Uniform in [0, 1) addressed by key.
inline double keyed_uniform(std::initializer_list<std::uint64_t> keys) noexcept {
    return to_unit(hash_keys(keys));
}

/// Standard normal addressed by key.
inline double keyed_normal(std::initializer_list<std::uint64_t> keys) noexcept {
    Stream s(hash_keys(keys));
    return s.normal();
}

}  // namespace capire::rng
