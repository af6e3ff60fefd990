#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ivcea {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for an independent substream identified by (master, stream, sub).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t sub = 0) noexcept {
    return mix64(mix64(mix64(master) ^ (stream + 0x632be59bd9b4e019ULL)) ^
                 (sub * 0x8cb92ba72f3d8dd7ULL + 1));
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream, std::uint64_t sub = 0) {
    return Rng(derive_seed(master, stream, sub));
}

/// FNV-1a, used to turn method labels into stable stream ids.
constexpr std::uint64_t stable_hash(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace ivcea
