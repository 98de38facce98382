#pragma once

#include <cstdint>
#include <random>

namespace exifcons {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed for one data-loading stream. Batches are a pure function of
/// (global_seed, stream, counter), so results do not depend on how many
/// workers build them.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t stream,
                                 std::uint64_t counter) {
  return splitmix64(splitmix64(splitmix64(global_seed) ^ stream) ^ counter);
}

inline Rng make_rng(std::uint64_t global_seed, std::uint64_t stream,
                    std::uint64_t counter) {
  return Rng(derive_seed(global_seed, stream, counter));
}

/// Uniform integer in [lo, hi].
inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline bool coin(Rng& rng, double p = 0.5) { return uniform_real(rng) < p; }

}  // namespace exifcons
