#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <string>
#include <vector>

#include "fbagg/features.hpp"
#include "fbagg/grid.hpp"
#include "fbagg/pomdp.hpp"
#include "fbagg/random.hpp"
#include "fbagg/rollout.hpp"
#include "fbagg/solver.hpp"

namespace fbagg {

/// J̃(b) = Σ ψ r*, plus V(b) for a biased solution.
class CostApprox {
 public:
  CostApprox(const FeatureScheme& scheme, AggregateValue solution, std::optional<BiasFunction> bias = std::nullopt)
      : scheme_(&scheme), solution_(std::move(solution)), bias_(std::move(bias)),
        misses_(std::make_shared<std::atomic<std::size_t>>(0)) {
    if (solution_.table.feature_count() != scheme.feature_count()) {
      throw InvalidArgument("solution does not match the feature scheme");
    }
    if (!solution_.bias_tag.empty() && !bias_) {
      throw InvalidArgument("solution was computed with bias '" + solution_.bias_tag + "' but no bias was supplied");
    }
  }

  const FeatureScheme& scheme() const { return *scheme_; }
  const AggregateValue& solution() const { return solution_; }
  const std::optional<BiasFunction>& bias() const { return bias_; }
  std::uint32_t rho() const { return solution_.rho; }
  PsiMode psi_mode() const { return solution_.psi_mode; }
  std::size_t misses() const { return misses_->load(); }
  void reset_misses() const { misses_->store(0); }

  /// Interpolated part Σ ψ r* only (J̃ − V for a biased solution).
  double interpolated(const Belief& b) const {
    FeatureBelief q = aggregate_features(*scheme_, b);
    double s = 0.0;
    for (const auto& wp : psi_weights(q, solution_.rho, solution_.psi_mode)) {
      auto idx = solution_.table.find(wp.point);
      if (!idx || *idx >= solution_.values.size()) {
        misses_->fetch_add(1);
        continue;
      }
      s += wp.weight * solution_.values[*idx];
    }
    return s;
  }

  double operator()(const Belief& b) const {
    double s = interpolated(b);
    return bias_ ? s + (*bias_)(b) : s;
  }

 private:
  const FeatureScheme* scheme_;
  AggregateValue solution_;
  std::optional<BiasFunction> bias_;
  std::shared_ptr<std::atomic<std::size_t>> misses_;
};

inline double approx_cost(const CostApprox& ca, const Belief& b) { return ca(b); }

/// J̃ of a shared CostApprox as a bias source.
inline BiasFunction bias_from(std::shared_ptr<const CostApprox> ca, std::string tag) {
  return {[ca](const Belief& b) { return (*ca)(b); }, std::move(tag)};
}

struct LookaheadResult {
  ControlIndex control = 0;
  std::vector<double> q_values;
};

/// ĝ(b,u) + α Σ_z p̂(z|b,u) J̃(F(b,u,z)) for every u; ties to the lowest index.
template <class CostFn>
LookaheadResult lookahead(const CostFn& cost, const TabularPomdp& m, const Belief& b) {
  LookaheadResult r;
  for (ControlIndex u = 0; u < m.control_count(); ++u) {
    Expansion ex = expand(m, b, u);
    double future = 0.0;
    for (const auto& br : ex.branches) future += br.probability * cost(br.posterior);
    r.q_values.push_back(ex.stage_cost + m.discount() * future);
    if (r.q_values[u] < r.q_values[r.control]) r.control = u;
  }
  return r;
}

inline Policy lookahead_policy(const CostApprox& ca, const TabularPomdp& m) {
  return [&ca, &m](const Belief& b) { return lookahead(ca, m, b).control; };
}

inline Policy constant_policy(ControlIndex u) {
  return [u](const Belief&) { return u; };
}

// ---------------------------------------------------------------------------
// Reference J*

inline constexpr std::uint64_t kOracleGridLimit = 5'000'000;

inline std::uint32_t default_oracle_resolution(std::size_t n) {
  if (n <= 3) return 2000;
  if (n <= 5) return 60;
  throw InfeasibleOracle("no default oracle resolution for " + std::to_string(n) + " states");
}

/// Converged flat-scheme (𝓕 = X) solve with convex ψ at a fine resolution.
/// Eager oracles cover the whole belief simplex; restricted ones cover only
/// the ψ∘G closure of the beliefs they were built for and throw elsewhere.
class ExactOracle {
 public:
  ExactOracle(const TabularPomdp& model, std::uint32_t rho0, const std::vector<Belief>& restrict_to = {},
              double tolerance = 1e-10, std::uint64_t limit = kOracleGridLimit)
      : scheme_(std::make_shared<FeatureScheme>(identity_scheme(model.state_count()))), rho0_(rho0) {
    SolverConfig cfg;
    cfg.tolerance = tolerance;
    if (restrict_to.empty()) {
      std::uint64_t size = 0;
      try {
        size = grid_size(rho0, model.state_count());
      } catch (const GridOverflow&) {
        size = std::numeric_limits<std::uint64_t>::max();
      }
      if (size > limit) {
        throw InfeasibleOracle("oracle grid of " + std::to_string(size) + " points exceeds the limit " +
                               std::to_string(limit));
      }
      cfg.expansion = ExpansionMode::eager;
      cfg.eager_limit = limit;
    } else {
      cfg.expansion = ExpansionMode::lazy;
      for (const auto& b : restrict_to) {
        for (const auto& wp : convex_weights(aggregate_features(*scheme_, b), rho0)) cfg.seeds.push_back(wp.point);
      }
    }
    solution_ = std::make_shared<AggregateValue>(solve_async(model, *scheme_, rho0, PsiMode::convex, cfg));
    if (!solution_->converged) throw InfeasibleOracle("oracle value iteration did not converge");
  }

  double operator()(const Belief& b) const {
    FeatureBelief q = aggregate_features(*scheme_, b);
    double s = 0.0;
    for (const auto& wp : convex_weights(q, rho0_)) {
      auto idx = solution_->table.find(wp.point);
      if (!idx) throw InfeasibleOracle("belief outside the oracle's restricted domain");
      s += wp.weight * solution_->values[*idx];
    }
    return s;
  }

  std::uint32_t resolution() const { return rho0_; }
  const AggregateValue& solution() const { return *solution_; }
  const FeatureScheme& scheme() const { return *scheme_; }

 private:
  std::shared_ptr<FeatureScheme> scheme_;
  std::uint32_t rho0_;
  std::shared_ptr<AggregateValue> solution_;
};

inline ExactOracle exact_oracle(const TabularPomdp& model, std::optional<std::uint32_t> rho0 = std::nullopt) {
  return ExactOracle(model, rho0 ? *rho0 : default_oracle_resolution(model.state_count()));
}

// ---------------------------------------------------------------------------
// Diagnostics

struct FootprintStat {
  GridPoint point;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

struct BoundReport {
  double epsilon_hat = 0.0;
  double bound = 0.0;
  double max_violation_over = 0.0;   // max of J̃ − J*
  double max_violation_under = 0.0;  // max of J* − J̃
  double sup_error = 0.0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double slack = 0.0;
  bool lower_bound_checked = false;
  bool lower_bound_holds = true;
  std::size_t hull_samples = 0;  // samples with b = Σ ψ·D(q̃)
  bool bound_holds = true;
  std::size_t misses = 0;
  std::vector<FootprintStat> footprint_stats;
};

struct BoundOptions {
  std::size_t sample_count = 1000;
  std::uint64_t seed = 0;
  double slack = 1e-3;
  bool include_representatives = true;
  std::vector<Belief> extra;  // always evaluated, e.g. a plotting family
};

/// Samples beliefs, records the spread of J* (J* − V when biased) over each
/// footprint set, and compares J̃ against the oracle.
template <class Oracle>
BoundReport bound_report(const CostApprox& ca, const TabularPomdp& model, const Oracle& oracle,
                         const BoundOptions& opt = {}) {
  const auto& scheme = ca.scheme();
  std::vector<Belief> samples = opt.extra;
  auto support = reachable_states(scheme, model);
  Rng rng = make_rng(opt.seed, 0);
  for (std::size_t s = 0; s < opt.sample_count; ++s) {
    samples.push_back(dirichlet_uniform<StateTag>(model.state_count(), support, rng));
  }
  if (opt.include_representatives) {
    const auto& table = ca.solution().table;
    for (std::size_t p = 0; p < table.size(); ++p) samples.push_back(disaggregate(scheme, table.key(p)));
  }
  if (samples.empty()) throw InvalidArgument("bound report needs at least one sample");
  ca.reset_misses();
  BoundReport rep;
  rep.samples = samples.size();
  rep.seed = opt.seed;
  rep.slack = opt.slack;
  rep.max_violation_over = -std::numeric_limits<double>::infinity();
  rep.max_violation_under = -std::numeric_limits<double>::infinity();
  double hull_over = -std::numeric_limits<double>::infinity();
  std::map<std::size_t, std::pair<GridPoint, FootprintStat>> stats;
  std::unordered_map<GridPoint, std::size_t, GridPointHash> ids;
  for (const auto& b : samples) {
    double jstar = oracle(b);
    double jt = ca(b);
    rep.max_violation_over = std::max(rep.max_violation_over, jt - jstar);
    rep.max_violation_under = std::max(rep.max_violation_under, jstar - jt);
    double h = ca.bias() ? jstar - (*ca.bias())(b) : jstar;
    auto weights = psi_weights(aggregate_features(scheme, b), ca.rho(), ca.psi_mode());
    if (ca.psi_mode() == PsiMode::convex) {
      std::vector<double> mix(model.state_count(), 0.0);
      for (const auto& wp : weights) {
        for (const auto& e : disaggregate(scheme, wp.point)) mix[e.index] += wp.weight * e.weight;
      }
      for (const auto& e : b) mix[e.index] -= e.weight;
      double dev = 0.0;
      for (double d : mix) dev += std::abs(d);
      if (dev <= 1e-9) {
        ++rep.hull_samples;
        hull_over = std::max(hull_over, jt - jstar);
      }
    }
    for (const auto& wp : weights) {
      auto [it, fresh] = ids.try_emplace(wp.point, ids.size());
      auto& st = stats[it->second].second;
      if (fresh) {
        st.point = wp.point;
        st.min = st.max = h;
      }
      st.min = std::min(st.min, h);
      st.max = std::max(st.max, h);
      ++st.count;
    }
  }
  for (auto& [id, entry] : stats) {
    rep.epsilon_hat = std::max(rep.epsilon_hat, entry.second.max - entry.second.min);
    rep.footprint_stats.push_back(std::move(entry.second));
  }
  rep.bound = rep.epsilon_hat / (1.0 - model.discount());
  rep.sup_error = std::max({rep.max_violation_over, rep.max_violation_under, 0.0});
  rep.bound_holds = rep.sup_error <= rep.bound + opt.slack;
  if (rep.hull_samples > 0) {
    rep.lower_bound_checked = true;
    rep.lower_bound_holds = hull_over <= opt.slack;
  }
  rep.misses = ca.misses();
  return rep;
}

enum class Linearity { linear, nonlinear, not_applicable };

struct LinearityReport {
  Linearity result = Linearity::not_applicable;
  double max_deviation = 0.0;
  std::string reason;
};

/// Tests J̃ (or J̃ − V) for linearity along random segments. Applicable when
/// ψ is convex and the table consists of the |𝓕| vertices of the feature
/// simplex (ρ = 1); for 𝓕 = X this is the case of n representative beliefs.
inline LinearityReport linearity_check(const CostApprox& ca, std::size_t trials = 100, std::uint64_t seed = 0,
                                       double tol = 1e-9) {
  LinearityReport rep;
  const auto& sol = ca.solution();
  if (ca.psi_mode() != PsiMode::convex) {
    rep.reason = "requires convex psi";
    return rep;
  }
  if (sol.rho != 1 || sol.table.size() != ca.scheme().feature_count()) {
    rep.reason = "representative set is not the vertex set of the feature simplex";
    return rep;
  }
  const std::size_t n = ca.scheme().state_count();
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0u);
  Rng rng = make_rng(seed, 0);
  for (std::size_t t = 0; t < trials; ++t) {
    Belief b1 = dirichlet_uniform<StateTag>(n, all, rng);
    Belief b2 = dirichlet_uniform<StateTag>(n, all, rng);
    double g = t == 0 ? 0.0 : (t == 1 ? 1.0 : uniform01(rng));
    std::vector<double> mix(n);
    auto d1 = b1.dense(), d2 = b2.dense();
    for (std::size_t i = 0; i < n; ++i) mix[i] = g * d1[i] + (1.0 - g) * d2[i];
    Belief bm = Belief::from_dense(mix, true);
    double lhs = ca.interpolated(bm);
    double rhs = g * ca.interpolated(b1) + (1.0 - g) * ca.interpolated(b2);
    rep.max_deviation = std::max(rep.max_deviation, std::abs(lhs - rhs));
  }
  rep.result = rep.max_deviation <= tol ? Linearity::linear : Linearity::nonlinear;
  return rep;
}

}  // namespace fbagg
