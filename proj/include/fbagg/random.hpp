#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "fbagg/distribution.hpp"

namespace fbagg {

using Rng = std::mt19937_64;

/// Independent stream for (seed, stream) pairs.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

/// Uniform double in [0,1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_index(Rng& rng, std::size_t count) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(count)) % count;
}

/// Draws an index from weights that sum to (approximately) one.
inline std::uint32_t sample_weighted(std::span<const WeightedIndex> entries, Rng& rng) {
  double r = uniform01(rng);
  double acc = 0.0;
  for (const auto& e : entries) {
    acc += e.weight;
    if (r < acc) return e.index;
  }
  return entries.back().index;
}

/// Standard exponential via inversion; used for Dirichlet draws.
inline double exponential(Rng& rng) { return -std::log1p(-uniform01(rng)); }

/// Flat Dirichlet(1,...,1) sample over the given support.
template <class Tag>
SparseDistribution<Tag> dirichlet_uniform(std::size_t dimension, std::span<const std::uint32_t> support, Rng& rng) {
  std::vector<WeightedIndex> e;
  double total = 0.0;
  for (auto i : support) {
    double x = exponential(rng);
    e.push_back({i, x});
    total += x;
  }
  if (!(total > 0.0)) e.front().weight = total = 1.0;
  for (auto& w : e) w.weight /= total;
  return SparseDistribution<Tag>(dimension, std::move(e), true);
}

}  // namespace fbagg
