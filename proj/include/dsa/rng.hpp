#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

// Deterministic, platform-independent randomness. The standard <random>
// distributions are implementation-defined, so every stochastic feature
// (noise augmentation, ALR sampling, mock jitter) goes through these.
namespace dsa::rng {

struct SplitMix64 {
    std::uint64_t state = 0;

    explicit SplitMix64(std::uint64_t seed = 0) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1) with 53-bit resolution
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }
};

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Stable per-purpose seed derivation from the global run seed.
inline std::uint64_t derive(std::uint64_t seed, std::string_view tag) {
    SplitMix64 g(seed ^ fnv1a(tag));
    return g.next();
}
inline std::uint64_t derive(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
    SplitMix64 g(seed ^ fnv1a(tag) ^ (index * 0x9e3779b97f4a7c15ULL));
    return g.next();
}

// Box-Muller; one draw per call, no cached state.
inline double gaussian(SplitMix64& g) {
    double u1 = g.uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = g.uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Seeded uniform sample of k distinct indices from [0,n), Fisher-Yates prefix.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    SplitMix64 g(seed);
    for (std::size_t i = 0; i < k && i + 1 < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(g.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace dsa::rng
