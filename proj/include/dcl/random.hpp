#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dcl {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent per-component seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed for a named component (and optional index) derived from one root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view component, std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the component name
    for (char ch : component) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ull;
    }
    return mix_seed(mix_seed(root ^ h) + index);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

/// Normal(mean, std) truncated at +-2 std by redrawing out-of-range samples.
inline double truncated_normal(Rng& rng, double mean, double std) {
    std::normal_distribution<double> nd(0.0, 1.0);
    for (;;) {
        const double z = nd(rng);
        if (z >= -2.0 && z <= 2.0) return mean + std * z;
    }
}

}  // namespace dcl
