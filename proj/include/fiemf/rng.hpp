#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

// Deterministic randomness helpers. Everything here is reproducible across
// platforms: std::mt19937_64 output is fully specified by the standard, and
// the shuffling / bounded-draw code below avoids std::shuffle and
// std::uniform_*_distribution, whose algorithms are implementation-defined.

namespace fiemf {

/// SplitMix64 step. Used to derive independent seed streams from one seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Mixes two seed components into one stream seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a;
    std::uint64_t x = splitmix64(s);
    s ^= b + 0x9e3779b97f4a7c15ull + (x << 6) + (x >> 2);
    return splitmix64(s);
}

/// Unbiased draw from [0, n) via Lemire's multiply-shift with rejection.
inline std::uint64_t bounded(std::mt19937_64& gen, std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(gen()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (lo < threshold) {
            m = static_cast<unsigned __int128>(gen()) * n;
            lo = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// In-place Fisher-Yates shuffle.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& gen) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(bounded(gen, i));
        std::swap(v[i - 1], v[j]);
    }
}

/// k distinct indices drawn from [0, n), returned in ascending order.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k,
                                               std::mt19937_64& gen) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    if (k > n) k = n;
    // partial Fisher-Yates: the first k slots end up holding the sample
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(bounded(gen, n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

} // namespace fiemf
