#pragma once

#include <cstdint>
#include <random>

namespace teleguard {

using Rng = std::mt19937_64;

// splitmix64 finalizer over (base, stream); gives independent sub-seeds.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stream ids used with derive_seed.
namespace streams {
inline constexpr std::uint64_t kReset = 1;
inline constexpr std::uint64_t kObservation = 2;
inline constexpr std::uint64_t kOperator = 3;
}  // namespace streams

}  // namespace teleguard
