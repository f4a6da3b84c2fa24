#pragma once

// Seed-derivation helpers. Every stochastic consumer (init, per-epoch batches,
// Monte Carlo estimates) derives its own seed from (base, stream, index) so
// runs are reproducible and streams never alias across purposes.

#include <cstdint>
#include <random>

namespace tnn {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    std::uint64_t s = base;
    std::uint64_t a = splitmix64(s);
    s ^= stream * 0x9e3779b97f4a7c15ULL;
    a ^= splitmix64(s);
    s ^= index + 0x632be59bd9b4e019ULL;
    a ^= splitmix64(s);
    return a;
}

// Stream tags, to keep call sites self-describing.
namespace seed_stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kFeature = 2;
inline constexpr std::uint64_t kInterior = 3;
inline constexpr std::uint64_t kBoundary = 4;
inline constexpr std::uint64_t kInitial = 5;
inline constexpr std::uint64_t kEval = 6;
inline constexpr std::uint64_t kRebuild = 7;
inline constexpr std::uint64_t kGrid = 8;
}  // namespace seed_stream

inline std::mt19937_64 make_engine(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace tnn
