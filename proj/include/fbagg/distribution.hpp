#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fbagg/errors.hpp"

namespace fbagg {

using StateIndex = std::uint32_t;
using FeatureIndex = std::uint32_t;
using ControlIndex = std::size_t;
using ObservationIndex = std::size_t;

inline constexpr double kBeliefSumTolerance = 1e-10;
inline constexpr double kPruneThreshold = 1e-15;

struct WeightedIndex {
  std::uint32_t index;
  double weight;

  friend bool operator==(const WeightedIndex&, const WeightedIndex&) = default;
};

struct trusted_t {
  explicit trusted_t() = default;
};
inline constexpr trusted_t trusted{};

/// Sparse probability vector over {0..dimension-1}. Entries are sorted by
/// index, strictly positive and sum to one.
template <class Tag>
class SparseDistribution {
 public:
  SparseDistribution() = default;

  /// Validating constructor. Duplicate indices are merged, zeros dropped.
  /// With `normalize`, any positive total is rescaled to one.
  SparseDistribution(std::size_t dimension, std::vector<WeightedIndex> entries, bool normalize = false)
      : dimension_(dimension), entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(),
              [](const WeightedIndex& a, const WeightedIndex& b) { return a.index < b.index; });
    std::vector<WeightedIndex> merged;
    merged.reserve(entries_.size());
    double total = 0.0;
    for (const auto& e : entries_) {
      if (e.index >= dimension_) throw InvalidArgument("distribution index " + std::to_string(e.index) + " out of range");
      if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) throw InvalidArgument("distribution weight must be finite and nonnegative");
      total += e.weight;
      if (e.weight == 0.0) continue;
      if (!merged.empty() && merged.back().index == e.index) {
        merged.back().weight += e.weight;
      } else {
        merged.push_back(e);
      }
    }
    if (normalize) {
      if (!(total > 0.0)) throw InvalidArgument("cannot normalize a zero distribution");
      for (auto& e : merged) e.weight /= total;
    } else if (std::abs(total - 1.0) > kBeliefSumTolerance) {
      throw InvalidArgument("distribution sums to " + std::to_string(total));
    }
    entries_ = std::move(merged);
  }

  /// Adopts sorted, positive, normalized entries without checks.
  SparseDistribution(trusted_t, std::size_t dimension, std::vector<WeightedIndex> entries)
      : dimension_(dimension), entries_(std::move(entries)) {}

  static SparseDistribution point(std::size_t dimension, std::uint32_t index) {
    if (index >= dimension) throw InvalidArgument("point mass index out of range");
    return SparseDistribution(trusted, dimension, {{index, 1.0}});
  }

  static SparseDistribution uniform(std::size_t dimension, std::span<const std::uint32_t> support) {
    std::vector<WeightedIndex> e;
    for (auto i : support) e.push_back({i, 1.0});
    return SparseDistribution(dimension, std::move(e), true);
  }

  static SparseDistribution from_dense(std::span<const double> weights, bool normalize = false) {
    std::vector<WeightedIndex> e;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] != 0.0) e.push_back({static_cast<std::uint32_t>(i), weights[i]});
    }
    return SparseDistribution(weights.size(), std::move(e), normalize);
  }

  std::size_t dimension() const { return dimension_; }
  std::size_t support_size() const { return entries_.size(); }
  std::span<const WeightedIndex> entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  double operator[](std::uint32_t index) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const WeightedIndex& e, std::uint32_t i) { return e.index < i; });
    return (it != entries_.end() && it->index == index) ? it->weight : 0.0;
  }

  std::vector<double> dense() const {
    std::vector<double> out(dimension_, 0.0);
    for (const auto& e : entries_) out[e.index] = e.weight;
    return out;
  }

  double l1_distance(const SparseDistribution& other) const {
    double d = 0.0;
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    while (a != entries_.end() || b != other.entries_.end()) {
      if (b == other.entries_.end() || (a != entries_.end() && a->index < b->index)) {
        d += a->weight;
        ++a;
      } else if (a == entries_.end() || b->index < a->index) {
        d += b->weight;
        ++b;
      } else {
        d += std::abs(a->weight - b->weight);
        ++a;
        ++b;
      }
    }
    return d;
  }

  double entropy() const {
    double h = 0.0;
    for (const auto& e : entries_) h -= e.weight * std::log(e.weight);
    return h;
  }

  friend bool operator==(const SparseDistribution&, const SparseDistribution&) = default;

 private:
  std::size_t dimension_ = 0;
  std::vector<WeightedIndex> entries_;
};

struct StateTag {};
struct FeatureTag {};

using Belief = SparseDistribution<StateTag>;
using FeatureBelief = SparseDistribution<FeatureTag>;

/// Sorts by index, merges duplicates, normalizes, drops weights below the
/// pruning threshold and renormalizes. Input weights must be nonnegative with
/// a positive total.
inline std::vector<WeightedIndex> normalize_and_prune(std::vector<WeightedIndex> raw) {
  std::sort(raw.begin(), raw.end(), [](const WeightedIndex& a, const WeightedIndex& b) { return a.index < b.index; });
  std::size_t w = 0;
  double total = 0.0;
  for (std::size_t r = 0; r < raw.size(); ++r) {
    if (raw[r].weight <= 0.0) continue;
    total += raw[r].weight;
    if (w > 0 && raw[w - 1].index == raw[r].index) {
      raw[w - 1].weight += raw[r].weight;
    } else {
      raw[w++] = raw[r];
    }
  }
  raw.resize(w);
  for (auto& e : raw) e.weight /= total;
  bool pruned = false;
  std::erase_if(raw, [&](const WeightedIndex& e) {
    bool drop = e.weight < kPruneThreshold;
    pruned = pruned || drop;
    return drop;
  });
  if (pruned) {
    double kept = 0.0;
    for (const auto& e : raw) kept += e.weight;
    for (auto& e : raw) e.weight /= kept;
  }
  return raw;
}

}  // namespace fbagg
