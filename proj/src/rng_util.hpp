#pragma once

#include <cstdint>

namespace mocap::detail {

// splitmix64 finalizer; used to derive decorrelated RNG streams.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, int a, int b = 0, int c = 0) {
    std::uint64_t s = mix64(seed);
    s = mix64(s ^ static_cast<std::uint64_t>(a));
    s = mix64(s ^ (static_cast<std::uint64_t>(b) << 20));
    s = mix64(s ^ (static_cast<std::uint64_t>(c) << 40));
    return s;
}

}  // namespace mocap::detail
