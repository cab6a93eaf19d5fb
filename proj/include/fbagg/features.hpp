#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "fbagg/distribution.hpp"
#include "fbagg/pomdp.hpp"

namespace fbagg {

struct FeatureDefinition {
  std::string name;
  std::vector<StateIndex> members;
  std::vector<WeightedIndex> disagg;  // (state, d_xi)
};

struct PhiEntry {
  StateIndex state;
  FeatureIndex feature;
  double weight;
};

/// Feature space with member sets I_x, disaggregation rows d_x. and
/// aggregation rows phi_j. . Construction checks ranges only; semantic
/// conditions are reported by validate_scheme().
class FeatureScheme {
 public:
  FeatureScheme() = default;

  /// `phi` may omit rows; a missing row for a state that belongs to exactly
  /// one member set defaults to the indicator of that feature.
  FeatureScheme(std::size_t n_states, std::vector<FeatureDefinition> features, const std::vector<PhiEntry>& phi = {})
      : n_(n_states) {
    if (features.empty()) throw InvalidArgument("feature scheme needs at least one feature");
    for (auto& f : features) {
      for (auto i : f.members) {
        if (i >= n_) throw InvalidArgument("member state out of range in feature '" + f.name + "'");
      }
      for (const auto& e : f.disagg) {
        if (e.index >= n_) throw InvalidArgument("disaggregation state out of range in feature '" + f.name + "'");
        if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) throw InvalidArgument("disaggregation weight invalid");
      }
      std::sort(f.members.begin(), f.members.end());
      f.members.erase(std::unique(f.members.begin(), f.members.end()), f.members.end());
      std::vector<WeightedIndex> d;
      std::sort(f.disagg.begin(), f.disagg.end(), [](auto& a, auto& b) { return a.index < b.index; });
      for (const auto& e : f.disagg) {
        if (e.weight == 0.0) continue;
        if (!d.empty() && d.back().index == e.index) {
          d.back().weight += e.weight;
        } else {
          d.push_back(e);
        }
      }
      f.disagg = std::move(d);
    }
    features_ = std::move(features);
    phi_.assign(n_, {});
    std::vector<bool> explicit_row(n_, false);
    for (const auto& e : phi) {
      if (e.state >= n_ || e.feature >= features_.size()) throw InvalidArgument("phi entry out of range");
      if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) throw InvalidArgument("phi weight invalid");
      explicit_row[e.state] = true;
      if (e.weight > 0.0) phi_[e.state].push_back({e.feature, e.weight});
    }
    std::vector<std::vector<FeatureIndex>> owners(n_);
    for (FeatureIndex x = 0; x < features_.size(); ++x) {
      for (auto i : features_[x].members) owners[i].push_back(x);
    }
    for (StateIndex j = 0; j < n_; ++j) {
      auto& row = phi_[j];
      if (!explicit_row[j] && owners[j].size() == 1) row.push_back({owners[j][0], 1.0});
      std::sort(row.begin(), row.end(), [](auto& a, auto& b) { return a.index < b.index; });
      std::vector<WeightedIndex> merged;
      for (const auto& e : row) {
        if (!merged.empty() && merged.back().index == e.index) {
          merged.back().weight += e.weight;
        } else {
          merged.push_back(e);
        }
      }
      row = std::move(merged);
    }
  }

  std::size_t state_count() const { return n_; }
  std::size_t feature_count() const { return features_.size(); }
  const FeatureDefinition& feature(FeatureIndex x) const { return features_[x]; }
  const std::vector<FeatureDefinition>& features() const { return features_; }
  std::span<const WeightedIndex> disagg(FeatureIndex x) const { return features_[x].disagg; }
  std::span<const WeightedIndex> phi(StateIndex j) const { return phi_[j]; }

 private:
  std::size_t n_ = 0;
  std::vector<FeatureDefinition> features_;
  std::vector<std::vector<WeightedIndex>> phi_;  // per state: (feature, weight)
};

/// Returns one message per violated scheme condition; empty means valid.
inline std::vector<std::string> validate_scheme(const FeatureScheme& s, double tol = kModelTolerance) {
  std::vector<std::string> issues;
  std::vector<int> owner(s.state_count(), -1);
  for (FeatureIndex x = 0; x < s.feature_count(); ++x) {
    const auto& f = s.feature(x);
    if (f.members.empty()) issues.push_back("feature " + std::to_string(x) + " has an empty member set");
    for (auto i : f.members) {
      if (owner[i] >= 0) {
        issues.push_back("member sets of features " + std::to_string(owner[i]) + " and " + std::to_string(x) +
                         " overlap at state " + std::to_string(i));
      } else {
        owner[i] = static_cast<int>(x);
      }
    }
    double total = 0.0;
    for (const auto& e : f.disagg) {
      total += e.weight;
      if (!std::binary_search(f.members.begin(), f.members.end(), e.index)) {
        issues.push_back("disaggregation of feature " + std::to_string(x) + " puts mass on non-member state " +
                         std::to_string(e.index));
      }
    }
    if (std::abs(total - 1.0) > tol) {
      issues.push_back("disaggregation of feature " + std::to_string(x) + " sums to " + std::to_string(total));
    }
  }
  for (StateIndex j = 0; j < s.state_count(); ++j) {
    double total = 0.0;
    for (const auto& e : s.phi(j)) total += e.weight;
    if (std::abs(total - 1.0) > tol) {
      issues.push_back("aggregation row of state " + std::to_string(j) + " sums to " + std::to_string(total));
    }
    if (owner[j] >= 0) {
      bool ok = false;
      for (const auto& e : s.phi(j)) {
        if (e.index == static_cast<FeatureIndex>(owner[j]) && std::abs(e.weight - 1.0) <= tol) ok = true;
      }
      if (!ok) {
        issues.push_back("aggregation row of member state " + std::to_string(j) + " is not the indicator of feature " +
                         std::to_string(owner[j]));
      }
    }
  }
  return issues;
}

inline void require_valid(const FeatureScheme& s) {
  auto issues = validate_scheme(s);
  if (!issues.empty()) throw InvalidArgument("invalid feature scheme: " + issues.front());
}

inline void require_compatible(const FeatureScheme& s, const TabularPomdp& m) {
  if (s.state_count() != m.state_count()) throw InvalidArgument("feature scheme and model disagree on state count");
}

/// Φ(b): q(y) = Σ_j b(j) φ_jy.
inline FeatureBelief aggregate_features(const FeatureScheme& s, const Belief& b) {
  if (b.dimension() != s.state_count()) throw InvalidArgument("belief dimension does not match scheme");
  std::vector<WeightedIndex> raw;
  for (const auto& [j, w] : b) {
    for (const auto& [y, p] : s.phi(j)) raw.push_back({y, w * p});
  }
  std::sort(raw.begin(), raw.end(), [](auto& a, auto& c) { return a.index < c.index; });
  std::vector<WeightedIndex> out;
  for (const auto& e : raw) {
    if (!out.empty() && out.back().index == e.index) {
      out.back().weight += e.weight;
    } else {
      out.push_back(e);
    }
  }
  std::erase_if(out, [](auto& e) { return e.weight <= 0.0; });
  return FeatureBelief(trusted, s.feature_count(), std::move(out));
}

/// Mixture of disaggregation rows: b(i) = Σ_x q(x) d_xi.
inline Belief disaggregate(const FeatureScheme& s, const FeatureBelief& q) {
  if (q.dimension() != s.feature_count()) throw InvalidArgument("feature belief dimension does not match scheme");
  std::vector<WeightedIndex> raw;
  for (const auto& [x, w] : q) {
    for (const auto& [i, d] : s.disagg(x)) raw.push_back({i, w * d});
  }
  std::sort(raw.begin(), raw.end(), [](auto& a, auto& c) { return a.index < c.index; });
  std::vector<WeightedIndex> out;
  for (const auto& e : raw) {
    if (!out.empty() && out.back().index == e.index) {
      out.back().weight += e.weight;
    } else {
      out.push_back(e);
    }
  }
  std::erase_if(out, [](auto& e) { return e.weight <= 0.0; });
  return Belief(trusted, s.state_count(), std::move(out));
}

/// X̂: member states plus their one-step successors under any control.
inline std::vector<StateIndex> reachable_states(const FeatureScheme& s, const TabularPomdp& m) {
  require_compatible(s, m);
  std::set<StateIndex> out;
  for (const auto& f : s.features()) {
    for (auto i : f.members) {
      out.insert(i);
      for (ControlIndex u = 0; u < m.control_count(); ++u) {
        for (const auto& o : m.outcomes(i, u)) out.insert(o.next);
      }
    }
  }
  return {out.begin(), out.end()};
}

/// 𝓕 = X with point-mass disaggregation and aggregation.
inline FeatureScheme identity_scheme(std::size_t n) {
  std::vector<FeatureDefinition> f;
  for (StateIndex i = 0; i < n; ++i) f.push_back({"s" + std::to_string(i), {i}, {{i, 1.0}}});
  return FeatureScheme(n, std::move(f));
}

}  // namespace fbagg
