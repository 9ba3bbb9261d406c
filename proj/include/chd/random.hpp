#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace chd {

using Rng = std::mt19937_64;

/// Derives an independent child seed from a root seed and a stable tag, so
/// every stage of a run can be reseeded without sharing one stream.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    // splitmix64 finalizer
    std::uint64_t z = root ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace chd
