#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace stainlab::rng {

// std distributions are implementation-defined; everything that feeds a committed baseline
// goes through these helpers so results match across standard libraries.

using Engine = std::mt19937_64;

/// splitmix64 finaliser; used to derive independent seeds from (seed, stream, index).
constexpr std::uint64_t mix(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) noexcept {
    return mix(mix(mix(seed) ^ stream) ^ index);
}

/// Uniform double in [0,1) with 53 random bits.
inline double uniform01(Engine& e) { return double(e() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& e, double lo, double hi) { return lo + (hi - lo) * uniform01(e); }

/// Uniform integer in [0, n), unbiased (rejection sampling).
inline std::uint64_t below(Engine& e, std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % n);
    std::uint64_t v;
    do {
        v = e();
    } while (v >= limit);
    return v % n;
}

template <class T>
void shuffle(std::span<T> items, Engine& e) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = std::size_t(below(e, i));
        std::swap(items[i - 1], items[j]);
    }
}

inline bool coin(Engine& e) { return (e() >> 63) != 0; }

}  // namespace stainlab::rng
