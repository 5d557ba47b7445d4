#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace qfl {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a run seed and a path of
/// identifiers, e.g. derive_seed(seed, {client_id, round}).
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t part : path) {
        h = mix64(h ^ mix64(part + 0x632be59bd9b4e019ULL));
    }
    return h;
}

/// Stream tags so that different consumers of one run seed never collide.
enum class Stream : std::uint64_t {
    kInit = 1,
    kSplit = 2,
    kPartition = 3,
    kClient = 4,
    kEvaluate = 5,
    kDataset = 6,
};

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0) {
    return Rng(derive_seed(seed, {static_cast<std::uint64_t>(stream), a, b}));
}

}  // namespace qfl
