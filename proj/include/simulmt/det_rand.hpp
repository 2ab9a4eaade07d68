#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace simulmt {

// mt19937_64 output is pinned by the standard. The helpers below replace
// std::uniform_*_distribution, whose sequences differ between standard
// library implementations, so seeded outputs stay byte-identical across
// platforms.
using DetRng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

// Stable string hash (std::hash is not portable across implementations).
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Unbiased integer in [0, n) via rejection sampling.
inline std::uint64_t uniform_below(DetRng& rng, std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

// Uniform double in [0, 1) with 53 bits of precision.
inline double uniform_unit(DetRng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(DetRng& rng, double lo, double hi) {
    return lo + uniform_unit(rng) * (hi - lo);
}

template <typename T>
void shuffle_det(std::vector<T>& v, DetRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// First `count` indices of a seeded partial Fisher-Yates over [0, population).
inline std::vector<std::size_t> sample_without_replacement(DetRng& rng,
                                                           std::size_t population,
                                                           std::size_t count) {
    std::vector<std::size_t> idx(population);
    for (std::size_t i = 0; i < population; ++i) idx[i] = i;
    const std::size_t n = count < population ? count : population;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, population - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    return idx;
}

}  // namespace simulmt
