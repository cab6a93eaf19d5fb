#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fbagg/distribution.hpp"
#include "fbagg/errors.hpp"
#include "fbagg/features.hpp"

namespace fbagg {

enum class PsiMode { hard, convex };

inline const char* to_string(PsiMode m) { return m == PsiMode::hard ? "nearest" : "convex"; }

/// Values of ρ·q within this distance of an integer are treated as that integer.
inline constexpr double kGridSnap = 1e-10;

/// Simplex grid point δ/ρ, stored sparsely as (feature, δ_x) with δ_x > 0.
class GridPoint {
 public:
  struct Count {
    FeatureIndex feature;
    std::uint32_t count;
    friend bool operator==(const Count&, const Count&) = default;
  };

  GridPoint() = default;

  GridPoint(std::size_t features, std::uint32_t resolution, std::vector<Count> counts)
      : features_(static_cast<std::uint32_t>(features)), resolution_(resolution), counts_(std::move(counts)) {
    std::sort(counts_.begin(), counts_.end(), [](auto& a, auto& b) { return a.feature < b.feature; });
    std::uint64_t total = 0;
    for (std::size_t k = 0; k < counts_.size(); ++k) {
      if (counts_[k].feature >= features) throw InvalidArgument("grid feature index out of range");
      if (k > 0 && counts_[k].feature == counts_[k - 1].feature) throw InvalidArgument("duplicate grid feature");
      total += counts_[k].count;
    }
    std::erase_if(counts_, [](auto& c) { return c.count == 0; });
    if (total != resolution) throw InvalidArgument("grid counts must sum to the resolution");
  }

  static GridPoint from_dense(std::span<const std::uint32_t> deltas, std::uint32_t resolution) {
    std::vector<Count> c;
    for (std::size_t x = 0; x < deltas.size(); ++x) {
      if (deltas[x] > 0) c.push_back({static_cast<FeatureIndex>(x), deltas[x]});
    }
    return GridPoint(deltas.size(), resolution, std::move(c));
  }

  std::size_t feature_count() const { return features_; }
  std::uint32_t resolution() const { return resolution_; }
  std::span<const Count> counts() const { return counts_; }

  std::vector<std::uint32_t> dense() const {
    std::vector<std::uint32_t> d(features_, 0);
    for (auto& c : counts_) d[c.feature] = c.count;
    return d;
  }

  FeatureBelief belief() const {
    std::vector<WeightedIndex> e;
    for (auto& c : counts_) e.push_back({c.feature, static_cast<double>(c.count) / resolution_});
    return FeatureBelief(trusted, features_, std::move(e));
  }

  std::size_t hash() const {
    std::uint64_t h = 1469598103934665603ull ^ resolution_;
    for (auto& c : counts_) {
      h = (h ^ c.feature) * 1099511628211ull;
      h = (h ^ c.count) * 1099511628211ull;
    }
    return static_cast<std::size_t>(h ^ (h >> 29));
  }

  friend bool operator==(const GridPoint&, const GridPoint&) = default;

 private:
  std::uint32_t features_ = 0;
  std::uint32_t resolution_ = 0;
  std::vector<Count> counts_;
};

struct GridPointHash {
  std::size_t operator()(const GridPoint& g) const { return g.hash(); }
};

struct WeightedPoint {
  GridPoint point;
  double weight;
};

/// C(ρ+k−1, k−1), the number of grid points.
inline std::uint64_t grid_size(std::uint64_t rho, std::uint64_t k) {
  if (k == 0) throw InvalidArgument("feature count must be positive");
  // C(rho + k - 1, min(rho, k - 1)) with overflow detection.
  std::uint64_t r = std::min(rho, k - 1);
  std::uint64_t n = rho + k - 1;
  __extension__ using Wide = unsigned __int128;
  Wide acc = 1;
  for (std::uint64_t t = 1; t <= r; ++t) {
    acc = acc * (n - r + t) / t;
    if (acc > std::numeric_limits<std::uint64_t>::max()) {
      throw GridOverflow("grid size C(" + std::to_string(n) + "," + std::to_string(r) + ") overflows");
    }
  }
  return static_cast<std::uint64_t>(acc);
}

/// D applied to a grid point: b(i) = Σ_x (δ_x/ρ) d_xi.
inline Belief disaggregate(const FeatureScheme& s, const GridPoint& g) {
  if (g.feature_count() != s.feature_count()) throw InvalidArgument("grid point dimension does not match scheme");
  return disaggregate(s, g.belief());
}

namespace detail {

/// floor with snapping of values just below an integer.
inline double snapped_floor(double y) {
  double f = std::floor(y);
  if (y - f > 1.0 - kGridSnap) f += 1.0;
  return f;
}

}  // namespace detail

/// Max-norm nearest grid point: floor(ρq) plus one extra unit for the
/// coordinates with the largest fractional parts (lowest index on ties).
inline GridPoint nearest_representative(const FeatureBelief& q, std::uint32_t rho) {
  if (rho == 0) throw InvalidArgument("resolution must be positive");
  struct Part {
    FeatureIndex x;
    std::int64_t base;
    double frac;
  };
  std::vector<Part> parts;
  std::int64_t assigned = 0;
  for (const auto& [x, w] : q) {
    double y = w * rho;
    double f = detail::snapped_floor(y);
    double frac = std::max(0.0, y - f);
    if (frac < kGridSnap) frac = 0.0;
    parts.push_back({x, static_cast<std::int64_t>(f), frac});
    assigned += static_cast<std::int64_t>(f);
  }
  std::int64_t remaining = static_cast<std::int64_t>(rho) - assigned;
  std::vector<std::size_t> order(parts.size());
  std::iota(order.begin(), order.end(), 0);
  if (remaining > 0) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return parts[a].frac > parts[b].frac; });
    for (std::size_t t = 0; t < order.size() && remaining > 0; ++t, --remaining) parts[order[t]].base += 1;
  } else if (remaining < 0) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return parts[a].frac < parts[b].frac; });
    for (std::size_t t = 0; t < order.size() && remaining < 0; ++t) {
      if (parts[order[t]].base > 0) {
        parts[order[t]].base -= 1;
        ++remaining;
      }
    }
  }
  std::vector<GridPoint::Count> counts;
  for (auto& p : parts) {
    if (p.base > 0) counts.push_back({p.x, static_cast<std::uint32_t>(p.base)});
  }
  if (remaining > 0) {
    // Only reachable when q sums to noticeably less than one.
    FeatureIndex x = 0;
    while (std::any_of(counts.begin(), counts.end(), [&](auto& c) { return c.feature == x; })) ++x;
    counts.push_back({x, static_cast<std::uint32_t>(remaining)});
  }
  return GridPoint(q.dimension(), rho, std::move(counts));
}

/// Barycentric weights of q in the Kuhn simplex of the scaled grid that
/// contains it. Works in cumulative coordinates C_m = ρ Σ_{x<m} q_x.
inline std::vector<WeightedPoint> convex_weights(const FeatureBelief& q, std::uint32_t rho) {
  if (rho == 0) throw InvalidArgument("resolution must be positive");
  const std::size_t k = q.dimension();
  std::vector<std::int64_t> base(k + 1, 0);
  std::vector<double> frac(k + 1, 0.0);
  double cum = 0.0;
  auto it = q.begin();
  for (std::size_t m = 1; m < k; ++m) {
    for (; it != q.end() && it->index < m; ++it) cum += it->weight;
    double y = std::min(cum * rho, static_cast<double>(rho));
    double f = detail::snapped_floor(y);
    double r = y - f;
    if (r < kGridSnap) r = 0.0;
    base[m] = std::min<std::int64_t>(static_cast<std::int64_t>(f), rho);
    frac[m] = base[m] == static_cast<std::int64_t>(rho) ? 0.0 : r;
  }
  base[k] = rho;
  for (std::size_t m = 1; m <= k; ++m) base[m] = std::max(base[m], base[m - 1]);

  std::vector<std::size_t> order;
  for (std::size_t m = 1; m < k; ++m) {
    if (frac[m] > 0.0) order.push_back(m);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (frac[a] != frac[b]) return frac[a] > frac[b];
    return a > b;
  });

  auto make_point = [&](const std::vector<std::int64_t>& c) {
    std::vector<GridPoint::Count> counts;
    for (std::size_t x = 0; x < k; ++x) {
      auto d = c[x + 1] - c[x];
      if (d > 0) counts.push_back({static_cast<FeatureIndex>(x), static_cast<std::uint32_t>(d)});
    }
    return GridPoint(k, rho, std::move(counts));
  };

  std::vector<WeightedPoint> out;
  std::vector<std::int64_t> c = base;
  double prev = 1.0;
  for (std::size_t t = 0; t <= order.size(); ++t) {
    double next = t < order.size() ? frac[order[t]] : 0.0;
    double w = prev - next;
    if (w > kGridSnap) out.push_back({make_point(c), w});
    if (t < order.size()) c[order[t]] += 1;
    prev = next;
  }
  double total = 0.0;
  for (auto& p : out) total += p.weight;
  for (auto& p : out) p.weight /= total;
  return out;
}

/// ψ weights of q under either scheme.
inline std::vector<WeightedPoint> psi_weights(const FeatureBelief& q, std::uint32_t rho, PsiMode mode) {
  if (mode == PsiMode::hard) return {{nearest_representative(q, rho), 1.0}};
  return convex_weights(q, rho);
}

/// Every grid point in lexicographic order with δ_0 descending first.
inline std::vector<GridPoint> enumerate_grid(std::size_t k, std::uint32_t rho) {
  std::vector<GridPoint> out;
  std::vector<std::uint32_t> d(k, 0);
  auto rec = [&](auto&& self, std::size_t x, std::uint32_t rem) -> void {
    if (x + 1 == k) {
      d[x] = rem;
      out.push_back(GridPoint::from_dense(d, rho));
      return;
    }
    for (std::int64_t v = rem; v >= 0; --v) {
      d[x] = static_cast<std::uint32_t>(v);
      self(self, x + 1, rem - d[x]);
    }
  };
  rec(rec, 0, rho);
  return out;
}

/// Bijection between grid points and [0, grid_size) in enumerate_grid order.
class CompositionIndexer {
 public:
  CompositionIndexer() = default;
  CompositionIndexer(std::size_t k, std::uint32_t rho) : k_(k), rho_(rho), size_(grid_size(rho, k)) {
    table_.assign((rho_ + 1) * (k_ + 1), 0);
    for (std::size_t m = 1; m <= k_; ++m) {
      for (std::uint32_t s = 0; s <= rho_; ++s) table_[s * (k_ + 1) + m] = grid_size(s, m);
    }
  }

  std::uint64_t size() const { return size_; }

  /// Number of compositions of s into m nonnegative parts.
  std::uint64_t compositions(std::uint32_t s, std::size_t m) const { return table_[s * (k_ + 1) + m]; }

  std::uint64_t rank(const GridPoint& g) const {
    std::uint64_t r = 0;
    std::uint32_t rem = rho_;
    auto it = g.counts().begin();
    for (std::size_t x = 0; x + 1 < k_ && rem > 0; ++x) {
      std::uint32_t d = 0;
      if (it != g.counts().end() && it->feature == x) d = (it++)->count;
      if (rem > d) r += compositions(rem - d - 1, k_ - x);
      rem -= d;
    }
    return r;
  }

  GridPoint unrank(std::uint64_t r) const {
    std::vector<GridPoint::Count> counts;
    std::uint32_t rem = rho_;
    for (std::size_t x = 0; x + 1 < k_ && rem > 0; ++x) {
      // Largest d with compositions(rem - d - 1, k - x) <= r, scanning d downward.
      std::uint32_t d = rem;
      while (d > 0) {
        std::uint64_t skipped = compositions(rem - d, k_ - x);  // points with δ_x >= d
        if (skipped > r) break;
        --d;
      }
      if (d < rem) r -= compositions(rem - d - 1, k_ - x);
      if (d > 0) counts.push_back({static_cast<FeatureIndex>(x), d});
      rem -= d;
    }
    if (rem > 0) counts.push_back({static_cast<FeatureIndex>(k_ - 1), rem});
    return GridPoint(k_, rho_, std::move(counts));
  }

 private:
  std::size_t k_ = 0;
  std::uint32_t rho_ = 0;
  std::uint64_t size_ = 0;
  std::vector<std::uint64_t> table_;
};

/// Index of representative feature beliefs: the full grid (eager) or an
/// insertion-ordered set discovered on demand (lazy).
class RepresentativeTable {
 public:
  static constexpr std::uint64_t kDefaultEagerLimit = 50'000'000;

  static RepresentativeTable eager(std::size_t k, std::uint32_t rho, std::uint64_t limit = kDefaultEagerLimit) {
    std::uint64_t size = grid_size(rho, k);
    if (size > limit) {
      throw GridOverflow("grid of " + std::to_string(size) + " points exceeds the eager limit; use lazy expansion");
    }
    RepresentativeTable t;
    t.k_ = k;
    t.rho_ = rho;
    t.eager_ = true;
    t.indexer_ = CompositionIndexer(k, rho);
    return t;
  }

  static RepresentativeTable lazy(std::size_t k, std::uint32_t rho) {
    RepresentativeTable t;
    t.k_ = k;
    t.rho_ = rho;
    return t;
  }

  bool is_eager() const { return eager_; }
  std::size_t feature_count() const { return k_; }
  std::uint32_t resolution() const { return rho_; }
  std::size_t size() const { return eager_ ? static_cast<std::size_t>(indexer_.size()) : keys_.size(); }

  std::optional<std::size_t> find(const GridPoint& g) const {
    if (eager_) return static_cast<std::size_t>(indexer_.rank(g));
    auto it = index_.find(g);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Returns (index, inserted).
  std::pair<std::size_t, bool> insert(const GridPoint& g) {
    if (eager_) return {static_cast<std::size_t>(indexer_.rank(g)), false};
    auto [it, inserted] = index_.try_emplace(g, keys_.size());
    if (inserted) keys_.push_back(g);
    return {it->second, inserted};
  }

  GridPoint key(std::size_t idx) const { return eager_ ? indexer_.unrank(idx) : keys_[idx]; }

 private:
  std::size_t k_ = 0;
  std::uint32_t rho_ = 0;
  bool eager_ = false;
  CompositionIndexer indexer_;
  std::vector<GridPoint> keys_;
  std::unordered_map<GridPoint, std::size_t, GridPointHash> index_;
};

}  // namespace fbagg
