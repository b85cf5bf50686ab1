#pragma once

#include <cstdint>
#include <random>

namespace lens {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent seeds from coordinates.
inline std::uint64_t mix64(std::uint64_t h) {
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

inline std::uint64_t seed_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (mix64(b) + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

// Stable seed for a tuple of coordinates. Parallel and serial sweeps agree
// because every cell derives its stream from coordinates alone.
template <typename... Ints>
std::uint64_t derive_seed(std::uint64_t base, Ints... coords) {
    std::uint64_t s = mix64(base);
    ((s = seed_combine(s, static_cast<std::uint64_t>(coords))), ...);
    return s;
}

inline double draw_normal(Rng& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(rng);
}

inline double draw_uniform(Rng& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    return d(rng);
}

inline int draw_index(Rng& rng, int n) {
    std::uniform_int_distribution<int> d(0, n - 1);
    return d(rng);
}

}  // namespace lens
