#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace syntrans::rng {

// splitmix64 step; also used to mix (seed, index) pairs into stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Counter-based stream derivation: every (seed, index) pair gets its own
// independent generator seed, so episodes can be sampled in any order or in
// parallel without changing results.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t s = seed ^ (0x51409ce452f8f0e5ull + index * 0x2545f4914f6cdd1dull);
    splitmix64(s);
    return splitmix64(s);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

// Uniform double in [0, 1). Hand-rolled from raw engine output: the standard
// distributions are implementation-defined, the engine itself is not.
inline double uniform01(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Uniform double in [lo, hi).
inline double uniform(std::mt19937_64& eng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(eng);
}

// Unbiased integer in [0, n) via rejection sampling.
inline std::uint64_t uniform_below(std::mt19937_64& eng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = eng();
    } while (x >= limit);
    return x % n;
}

// Standard normal via Box-Muller. Always consumes two uniforms and discards
// the sine branch, keeping the draw count per call fixed.
inline double normal(std::mt19937_64& eng) {
    const double u1 = 1.0 - uniform01(eng); // (0, 1]
    const double u2 = uniform01(eng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// First k elements of a Fisher-Yates shuffle over 0..n-1, without materially
// shuffling the tail beyond what the draw requires.
inline std::vector<std::size_t> sample_indices(std::mt19937_64& eng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(uniform_below(eng, n - i));
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

} // namespace syntrans::rng
