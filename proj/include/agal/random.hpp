#pragma once

#include <cstdint>
#include <algorithm>
#include <random>
#include <vector>

#include "agal/common.hpp"

namespace agal {

/// Splitmix-style derivation of an independent stream seed from (base, index).
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// `size` distinct indices from [0, population), drawn without replacement, ascending.
inline std::vector<Index> sample_without_replacement(Index population, Index size, std::uint64_t seed) {
  std::vector<Index> pool(static_cast<std::size_t>(population));
  for (Index i = 0; i < population; ++i) pool[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < size; ++i) {
    std::uniform_int_distribution<Index> pick(i, population - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(size));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace agal
