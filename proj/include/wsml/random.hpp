#pragma once

#include "types.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace wsml {

using Rng = std::mt19937_64;

/// Independent stream seed from a base seed and a stream id (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Streams used across the library so that each concern draws from its own
// generator and adding draws in one place never shifts another.
enum class Stream : std::uint64_t {
  GeneratorWeights = 1,
  GeneratorFeatures,
  GeneratorLabels,
  Partialize,
  Subsample,
  Split,
  Init,
  Shuffle,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  return Rng(derive_seed(seed, static_cast<std::uint64_t>(stream)));
}

inline Index uniform_index(Rng &rng, Index upper_exclusive) {
  std::uniform_int_distribution<Index> dist(0, upper_exclusive - 1);
  return dist(rng);
}

/// Fisher-Yates permutation of 0..n-1.
inline std::vector<Index> random_permutation(Index n, Rng &rng) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(uniform_index(rng, i + 1))]);
  }
  return perm;
}

/// Uniformly random m-subset of 0..n-1, returned in ascending order.
inline std::vector<Index> random_subset(Index n, Index m, Rng &rng) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index i = 0; i < m; ++i) {
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(i + uniform_index(rng, n - i))]);
  }
  perm.resize(static_cast<std::size_t>(m));
  std::sort(perm.begin(), perm.end());
  return perm;
}

} // namespace wsml
