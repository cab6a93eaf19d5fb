#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fbagg/features.hpp"
#include "fbagg/grid.hpp"
#include "fbagg/parallel.hpp"
#include "fbagg/pomdp.hpp"

namespace fbagg {

/// Bias V used by biased aggregation, with a provenance tag.
struct BiasFunction {
  std::function<double(const Belief&)> evaluate;
  std::string tag;

  double operator()(const Belief& b) const { return evaluate(b); }
};

inline BiasFunction constant_bias(double c) {
  return {[c](const Belief&) { return c; }, "constant " + std::to_string(c)};
}

enum class SweepMode { sync, async };
enum class ExpansionMode { eager, lazy };

inline const char* to_string(SweepMode m) { return m == SweepMode::sync ? "sync" : "async"; }
inline const char* to_string(ExpansionMode m) { return m == ExpansionMode::eager ? "eager" : "lazy"; }

struct SolverConfig {
  double tolerance = 1e-9;
  std::size_t max_sweeps = 100000;
  ExpansionMode expansion = ExpansionMode::eager;
  std::vector<GridPoint> seeds{};  // lazy mode
  std::optional<BiasFunction> bias{};
  std::size_t threads = 1;
  std::uint64_t eager_limit = RepresentativeTable::kDefaultEagerLimit;
};

struct AggregateValue {
  RepresentativeTable table;
  std::vector<double> values;
  std::uint32_t rho = 0;
  PsiMode psi_mode = PsiMode::hard;
  SweepMode mode = SweepMode::sync;
  double residual = 0.0;          // sup-norm change of the last sweep
  double bellman_residual = 0.0;  // ‖Hr − r‖ at the returned r
  std::size_t iterations = 0;
  bool converged = false;
  std::string bias_tag;
  double seconds = 0.0;

  std::size_t size() const { return values.size(); }

  std::optional<double> value(const GridPoint& g) const {
    auto idx = table.find(g);
    if (!idx || *idx >= values.size()) return std::nullopt;
    return values[*idx];
  }
};

/// G(q̃,u,z) = Φ(F(D(q̃),u,z)).
inline FeatureBelief g_map(const FeatureScheme& s, const TabularPomdp& m, const GridPoint& q, ControlIndex u,
                           ObservationIndex z) {
  return aggregate_features(s, belief_update(m, disaggregate(s, q), u, z));
}

/// The aggregate MDP over a representative table, compiled row by row into a
/// per-control cost plus a sparse distribution over table indices. Rows of a
/// lazy table are compiled on demand and may append newly reached points.
class AggregateMdp {
 public:
  AggregateMdp(const TabularPomdp& model, const FeatureScheme& scheme, std::uint32_t rho, PsiMode psi,
               RepresentativeTable table, const BiasFunction* bias = nullptr)
      : model_(model), scheme_(scheme), rho_(rho), psi_(psi), bias_(bias), table_(std::move(table)) {
    require_compatible(scheme_, model_);
    require_valid(scheme_);
    if (model_.control_count() == 0) throw InvalidModel("empty control set");
    if (table_.feature_count() != scheme_.feature_count() || table_.resolution() != rho_) {
      throw InvalidArgument("representative table does not match scheme and resolution");
    }
    target_begin_.push_back(0);
  }

  const TabularPomdp& model() const { return model_; }
  const FeatureScheme& scheme() const { return scheme_; }
  std::uint32_t rho() const { return rho_; }
  PsiMode psi_mode() const { return psi_; }
  const BiasFunction* bias() const { return bias_; }
  const RepresentativeTable& table() const { return table_; }
  RepresentativeTable release_table() { return std::move(table_); }
  std::size_t size() const { return table_.size(); }
  std::size_t compiled() const { return compiled_; }
  std::size_t control_count() const { return model_.control_count(); }

  std::size_t add_point(const GridPoint& g) { return table_.insert(g).first; }

  /// Compiles the next uncompiled row; returns false if none is left.
  bool compile_next() {
    if (compiled_ >= table_.size()) return false;
    const std::size_t p = compiled_;
    Belief b = disaggregate(scheme_, table_.key(p));
    double vb = bias_ ? (*bias_)(b) : 0.0;
    for (ControlIndex u = 0; u < model_.control_count(); ++u) {
      Expansion ex = expand(model_, b, u);
      scratch_.clear();
      double bias_sum = 0.0;
      for (const auto& br : ex.branches) {
        FeatureBelief q = aggregate_features(scheme_, br.posterior);
        for (const auto& wp : psi_weights(q, rho_, psi_)) {
          std::size_t idx = table_.insert(wp.point).first;
          scratch_.push_back({static_cast<std::uint32_t>(idx), br.probability * wp.weight});
        }
        if (bias_) bias_sum += br.probability * (*bias_)(br.posterior);
      }
      std::sort(scratch_.begin(), scratch_.end(), [](auto& a, auto& c) { return a.index < c.index; });
      std::size_t first = target_index_.size();
      for (const auto& e : scratch_) {
        if (target_index_.size() > first && target_index_.back() == e.index) {
          target_weight_.back() += e.weight;
        } else {
          target_index_.push_back(e.index);
          target_weight_.push_back(e.weight);
        }
      }
      cost_.push_back((ex.stage_cost + model_.discount() * bias_sum) - vb);
      target_begin_.push_back(target_index_.size());
    }
    ++compiled_;
    return true;
  }

  /// Compiles every row, closing a lazy table under ψ∘G.
  void compile_all() {
    while (compile_next()) {
    }
  }

  /// Cost of control u at row p (bias terms folded in).
  double row_cost(std::size_t p, ControlIndex u) const { return cost_[p * control_count() + u]; }

  /// (target index, weight) pairs of control u at row p.
  std::vector<WeightedIndex> row_targets(std::size_t p, ControlIndex u) const {
    std::size_t r = p * control_count() + u;
    std::vector<WeightedIndex> out;
    for (std::size_t t = target_begin_[r]; t < target_begin_[r + 1]; ++t) out.push_back({target_index_[t], target_weight_[t]});
    return out;
  }

  double q_value(std::size_t p, ControlIndex u, std::span<const double> r) const {
    std::size_t row = p * control_count() + u;
    double s = 0.0;
    for (std::size_t t = target_begin_[row]; t < target_begin_[row + 1]; ++t) s += target_weight_[t] * r[target_index_[t]];
    return cost_[row] + model_.discount() * s;
  }

  /// (Hr)(q̃_p); row p must be compiled.
  double backup(std::size_t p, std::span<const double> r) const {
    double best = q_value(p, 0, r);
    for (ControlIndex u = 1; u < control_count(); ++u) best = std::min(best, q_value(p, u, r));
    return best;
  }

  /// Hr over all compiled rows; r must cover every index referenced by them.
  std::vector<double> apply(std::span<const double> r, std::size_t threads = 1) const {
    std::vector<double> out(compiled_);
    parallel_for(compiled_, threads, [&](std::size_t p) { out[p] = backup(p, r); });
    return out;
  }

  std::size_t target_count() const { return target_index_.size(); }

 private:
  const TabularPomdp& model_;
  const FeatureScheme& scheme_;
  std::uint32_t rho_;
  PsiMode psi_;
  const BiasFunction* bias_;
  RepresentativeTable table_;
  std::size_t compiled_ = 0;
  std::vector<double> cost_;
  std::vector<std::size_t> target_begin_;
  std::vector<std::uint32_t> target_index_;
  std::vector<double> target_weight_;
  std::vector<WeightedIndex> scratch_;
};

/// One application of H (or H̃ when the MDP carries a bias). In lazy mode,
/// targets absent from the value's table are added with value 0.
inline AggregateValue apply_H(const AggregateValue& v, AggregateMdp& mdp, std::size_t threads = 1) {
  if (v.values.empty()) throw InvalidArgument("value table is empty");
  if (mdp.size() < v.values.size()) throw InvalidArgument("aggregate MDP does not cover the value table");
  std::size_t old = v.values.size();
  while (mdp.compiled() < old) mdp.compile_next();
  std::vector<double> r = v.values;
  r.resize(mdp.size(), 0.0);
  AggregateValue out = v;
  out.values.assign(mdp.size(), 0.0);
  parallel_for(old, threads, [&](std::size_t p) { out.values[p] = mdp.backup(p, r); });
  out.table = mdp.table();
  out.iterations = v.iterations + 1;
  double change = 0.0;
  for (std::size_t p = 0; p < old; ++p) change = std::max(change, std::abs(out.values[p] - v.values[p]));
  out.residual = change;
  return out;
}

/// apply_H with the bias V folded into the stage cost.
inline AggregateValue apply_H_biased(const AggregateValue& v, const BiasFunction& bias, const TabularPomdp& model,
                                     const FeatureScheme& scheme, std::size_t threads = 1) {
  AggregateMdp mdp(model, scheme, v.rho, v.psi_mode, v.table, &bias);
  auto out = apply_H(v, mdp, threads);
  out.bias_tag = bias.tag;
  return out;
}

namespace detail {

inline RepresentativeTable initial_table(const FeatureScheme& scheme, std::uint32_t rho, const SolverConfig& cfg) {
  if (cfg.expansion == ExpansionMode::eager) return RepresentativeTable::eager(scheme.feature_count(), rho, cfg.eager_limit);
  if (cfg.seeds.empty()) throw InvalidArgument("lazy expansion needs at least one seed");
  auto t = RepresentativeTable::lazy(scheme.feature_count(), rho);
  for (const auto& s : cfg.seeds) {
    if (s.feature_count() != scheme.feature_count() || s.resolution() != rho) {
      throw InvalidArgument("seed does not match scheme and resolution");
    }
    t.insert(s);
  }
  return t;
}

inline double bellman_residual(const AggregateMdp& mdp, std::span<const double> r) {
  double res = 0.0;
  for (std::size_t p = 0; p < mdp.compiled(); ++p) res = std::max(res, std::abs(mdp.backup(p, r) - r[p]));
  return res;
}

inline AggregateValue finish(AggregateMdp& mdp, std::vector<double> r, SweepMode mode, const SolverConfig& cfg,
                             double residual, std::size_t sweeps, bool converged, double seconds) {
  AggregateValue v;
  v.bellman_residual = bellman_residual(mdp, r);
  v.rho = mdp.rho();
  v.psi_mode = mdp.psi_mode();
  v.mode = mode;
  v.residual = residual;
  v.iterations = sweeps;
  v.converged = converged;
  v.bias_tag = cfg.bias ? cfg.bias->tag : "";
  v.seconds = seconds;
  v.values = std::move(r);
  v.table = mdp.release_table();
  return v;
}

inline double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Jacobi value iteration r ← Hr from r = 0. A lazy table is first closed
/// under ψ∘G from the seeds.
inline AggregateValue solve_sync(const TabularPomdp& model, const FeatureScheme& scheme, std::uint32_t rho, PsiMode psi,
                                 const SolverConfig& cfg = {}) {
  if (!(cfg.tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  auto t0 = std::chrono::steady_clock::now();
  AggregateMdp mdp(model, scheme, rho, psi, detail::initial_table(scheme, rho, cfg), cfg.bias ? &*cfg.bias : nullptr);
  mdp.compile_all();
  std::vector<double> r(mdp.size(), 0.0);
  double change = 0.0;
  std::size_t sweeps = 0;
  bool converged = false;
  while (sweeps < cfg.max_sweeps) {
    std::vector<double> next = mdp.apply(r, cfg.threads);
    change = 0.0;
    for (std::size_t p = 0; p < r.size(); ++p) change = std::max(change, std::abs(next[p] - r[p]));
    r.swap(next);
    ++sweeps;
    if (change < cfg.tolerance) {
      converged = true;
      break;
    }
  }
  return detail::finish(mdp, std::move(r), SweepMode::sync, cfg, change, sweeps, converged, detail::elapsed(t0));
}

/// Gauss-Seidel value iteration over a FIFO work queue in table order. Each
/// step updates a single component in place; points reached for the first
/// time are appended to the queue and processed later in the same sweep.
inline AggregateValue solve_async(const TabularPomdp& model, const FeatureScheme& scheme, std::uint32_t rho, PsiMode psi,
                                  const SolverConfig& cfg = {}) {
  if (!(cfg.tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  auto t0 = std::chrono::steady_clock::now();
  AggregateMdp mdp(model, scheme, rho, psi, detail::initial_table(scheme, rho, cfg), cfg.bias ? &*cfg.bias : nullptr);
  std::vector<double> r(mdp.size(), 0.0);
  double change = 0.0;
  std::size_t sweeps = 0;
  bool converged = false;
  while (sweeps < cfg.max_sweeps) {
    change = 0.0;
    std::size_t before = mdp.size();
    for (std::size_t p = 0; p < mdp.size(); ++p) {
      if (p == mdp.compiled()) {
        mdp.compile_next();
        r.resize(mdp.size(), 0.0);
      }
      double v = mdp.backup(p, r);
      change = std::max(change, std::abs(v - r[p]));
      r[p] = v;
    }
    ++sweeps;
    if (change < cfg.tolerance && mdp.size() == before) {
      converged = true;
      break;
    }
  }
  mdp.compile_all();
  r.resize(mdp.size(), 0.0);
  return detail::finish(mdp, std::move(r), SweepMode::async, cfg, change, sweeps, converged, detail::elapsed(t0));
}

inline AggregateValue solve(const TabularPomdp& model, const FeatureScheme& scheme, std::uint32_t rho, PsiMode psi,
                            SweepMode mode, const SolverConfig& cfg = {}) {
  return mode == SweepMode::sync ? solve_sync(model, scheme, rho, psi, cfg) : solve_async(model, scheme, rho, psi, cfg);
}

}  // namespace fbagg
