#pragma once

#include <bit>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fbagg/features.hpp"
#include "fbagg/pomdp.hpp"

namespace fbagg {

/// Sites ℓ = 1..N; state bit ℓ−1 set means site ℓ still holds a treasure.
/// State 2^N is the terminal state t.
struct TreasureSpec {
  std::size_t N = 1;
  std::vector<double> v;
  std::vector<double> c;
  std::vector<double> beta;
  double discount = 0.99;

  static constexpr std::size_t kMaxSites = 20;

  /// Reference data set; the first N entries are used.
  static TreasureSpec standard(std::size_t N) {
    static const double v_all[] = {6.48, 5.22, 5.43, 7.58, 3.09, 3.76, 8.01, 8.53, 7.86, 8.20};
    static const double c_all[] = {0.55, 0.86, 0.58, 0.86, 0.50, 0.98, 0.85, 0.74, 0.58, 0.84};
    static const double b_all[] = {0.13, 0.78, 0.11, 0.68, 0.11, 0.10, 0.30, 0.73, 0.54, 0.45};
    if (N < 1 || N > 10) throw InvalidArgument("reference treasure data covers 1..10 sites");
    TreasureSpec s;
    s.N = N;
    s.v.assign(v_all, v_all + N);
    s.c.assign(c_all, c_all + N);
    s.beta.assign(b_all, b_all + N);
    return s;
  }

  void validate() const {
    if (N < 1 || N > kMaxSites) throw InvalidArgument("treasure site count must lie in 1.." + std::to_string(kMaxSites));
    if (v.size() != N || c.size() != N || beta.size() != N) throw InvalidArgument("treasure data vectors must have N entries");
    for (std::size_t l = 0; l < N; ++l) {
      if (!(beta[l] > 0.0 && beta[l] <= 1.0)) throw InvalidArgument("detection probability must lie in (0,1]");
      if (!(c[l] > 0.0) || !std::isfinite(c[l]) || !std::isfinite(v[l])) throw InvalidArgument("search costs must be positive");
    }
    if (!(discount > 0.0 && discount < 1.0)) throw InvalidArgument("discount must lie in (0,1)");
  }

  std::size_t state_count() const { return (std::size_t{1} << N) + 1; }
  StateIndex terminal() const { return static_cast<StateIndex>(std::size_t{1} << N); }
  ControlIndex terminate_control() const { return N; }
};

inline constexpr ObservationIndex kTreasureSuccess = 0;
inline constexpr ObservationIndex kTreasureFailure = 1;

inline TabularPomdp build_treasure(const TreasureSpec& s) {
  s.validate();
  std::vector<std::string> controls;
  for (std::size_t l = 1; l <= s.N; ++l) controls.push_back("search-" + std::to_string(l));
  controls.push_back("terminate");
  PomdpBuilder b(s.state_count(), controls, {"success", "failure"}, s.discount);
  const StateIndex t = s.terminal();
  for (StateIndex i = 0; i < t; ++i) {
    for (std::size_t l = 0; l < s.N; ++l) {
      const StateIndex bit = StateIndex{1} << l;
      if (i & bit) {
        b.add_transition(l, i, i ^ bit, s.beta[l]);
        b.add_branch_observation(l, i, i ^ bit, kTreasureSuccess, 1.0);
        b.set_cost(i, l, i ^ bit, s.c[l] - s.v[l]);
        if (s.beta[l] < 1.0) {
          b.add_transition(l, i, i, 1.0 - s.beta[l]);
          b.add_branch_observation(l, i, i, kTreasureFailure, 1.0);
          b.set_cost(i, l, i, s.c[l]);
        }
      } else {
        b.add_transition(l, i, i, 1.0);
        b.add_branch_observation(l, i, i, kTreasureFailure, 1.0);
        b.set_cost(i, l, i, s.c[l]);
      }
    }
    b.add_transition(s.N, i, t, 1.0);
    b.add_branch_observation(s.N, i, t, kTreasureFailure, 1.0);
  }
  for (ControlIndex u = 0; u <= s.N; ++u) {
    b.add_transition(u, t, t, 1.0);
    b.add_branch_observation(u, t, t, kTreasureFailure, 1.0);
  }
  return b.build();
}

enum class TreasureFeatureMode { max_value, grouped };

/// uniform: d spread evenly over I_x. sparse: all mass on the live member
/// with the fewest treasures (lowest index on ties).
enum class TreasureDisaggregation { uniform, sparse };

/// max_value: feature x ∈ {0..N} is the undiscovered site of largest value
/// (lowest index on ties), with the empty state and t in feature 0.
/// grouped: one feature per indicator vector over L contiguous site groups,
/// plus a separate terminal feature.
inline FeatureScheme treasure_feature_scheme(const TreasureSpec& s, TreasureFeatureMode mode, std::size_t L = 0,
                                             TreasureDisaggregation d = TreasureDisaggregation::uniform) {
  s.validate();
  const StateIndex t = s.terminal();
  std::vector<FeatureDefinition> f;
  auto finish = [&] {
    for (auto& fd : f) {
      if (d == TreasureDisaggregation::uniform) {
        for (auto i : fd.members) fd.disagg.push_back({i, 1.0 / static_cast<double>(fd.members.size())});
        continue;
      }
      auto weight = [&](StateIndex i) { return i == t ? 64 : std::popcount(i); };
      StateIndex pick = fd.members.front();
      for (auto i : fd.members) {
        if (weight(i) < weight(pick)) pick = i;
      }
      fd.disagg.push_back({pick, 1.0});
    }
    return FeatureScheme(s.state_count(), std::move(f));
  };
  if (mode == TreasureFeatureMode::max_value) {
    f.push_back({"none", {}, {}});
    for (std::size_t l = 1; l <= s.N; ++l) f.push_back({"site-" + std::to_string(l), {}, {}});
    for (StateIndex i = 0; i < t; ++i) {
      std::size_t best = 0;
      for (std::size_t l = 0; l < s.N; ++l) {
        if ((i >> l & 1u) && (best == 0 || s.v[l] > s.v[best - 1])) best = l + 1;
      }
      f[best].members.push_back(i);
    }
    f[0].members.push_back(t);
    return finish();
  }
  if (L < 1 || L > s.N || s.N % L != 0) throw InvalidArgument("group count must divide the site count");
  const std::size_t width = s.N / L;
  for (std::size_t x = 0; x < (std::size_t{1} << L); ++x) {
    std::string name = "groups-";
    for (std::size_t g = 0; g < L; ++g) name += (x >> g & 1u) ? '1' : '0';
    f.push_back({name, {}, {}});
  }
  for (StateIndex i = 0; i < t; ++i) {
    std::size_t x = 0;
    for (std::size_t g = 0; g < L; ++g) {
      StateIndex mask = ((StateIndex{1} << width) - 1) << (g * width);
      if (i & mask) x |= std::size_t{1} << g;
    }
    f[x].members.push_back(i);
  }
  f.push_back({"terminal", {t}, {}});
  return finish();
}

/// Belief over live states with independent sites: site ℓ holds a treasure
/// with probability p[ℓ−1].
inline Belief treasure_product_belief(const TreasureSpec& s, std::span<const double> p) {
  if (p.size() != s.N) throw InvalidArgument("need one probability per site");
  std::vector<WeightedIndex> e;
  for (StateIndex i = 0; i < s.terminal(); ++i) {
    double w = 1.0;
    for (std::size_t l = 0; l < s.N; ++l) w *= (i >> l & 1u) ? p[l] : 1.0 - p[l];
    if (w > 0.0) e.push_back({i, w});
  }
  return Belief(s.state_count(), std::move(e), true);
}

}  // namespace fbagg
