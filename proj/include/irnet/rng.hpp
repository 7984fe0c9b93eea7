#pragma once

// Seed derivation for independent random streams. Every stochastic step in a
// run (data generation, corruption, init, shuffling, augmentation) owns a
// stream derived from (base seed, purpose tag, ...), so adding draws to one
// step never perturbs another.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace irnet {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6a09e667f3bcc908ull;
    for (std::uint64_t p : parts) h = splitmix64(h ^ p);
    return h;
}

inline std::mt19937_64 derive_rng(std::initializer_list<std::uint64_t> parts) {
    return std::mt19937_64(mix_seed(parts));
}

// Stream tags. Values are arbitrary but frozen: changing them changes every
// derived stream and therefore all serialized outputs.
namespace seed_tag {
inline constexpr std::uint64_t dataset = 1;
inline constexpr std::uint64_t corrupt = 2;
inline constexpr std::uint64_t init = 3;
inline constexpr std::uint64_t shuffle = 4;
inline constexpr std::uint64_t augment = 5;
inline constexpr std::uint64_t theory = 6;
inline constexpr std::uint64_t merge = 7;
}  // namespace seed_tag

}  // namespace irnet
