#pragma once

#include <cstdint>
#include <random>

namespace qhedge {

// splitmix64 step; used to derive well-separated per-path seeds from a
// master seed so path generation is independent of execution order.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Engine for one simulated path, derived from (seed, path index).
inline std::mt19937_64 path_stream(std::uint64_t seed, std::uint64_t path) {
    std::uint64_t state = seed ^ (0x632be59bd9b4e019ULL * (path + 1));
    std::uint64_t a = splitmix64(state);
    std::uint64_t b = splitmix64(state);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace qhedge
