#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

// Distributions with a fixed mapping from mt19937_64 output, so seeded
// results do not depend on the standard library implementation.
namespace xlcode::rnd {

using Engine = std::mt19937_64;

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Engine& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Box-Muller; one sample per call keeps the stream position easy to reason about.
inline double normal(Engine& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::size_t below(Engine& rng, std::size_t n) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

template <typename T>
void shuffle(std::vector<T>& v, Engine& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[below(rng, i)]);
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
    Engine rng(seed);
    shuffle(v, rng);
}

} // namespace xlcode::rnd
