#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "fbagg/distribution.hpp"
#include "fbagg/errors.hpp"

namespace fbagg {

inline constexpr double kModelTolerance = 1e-12;

/// One joint (successor, observation) branch of a transition row.
struct Outcome {
  StateIndex next;
  ObservationIndex observation;
  double probability;  // p_ij(u) * p(z | branch)
  double cost;         // g(i, u, j)
};

/// Immutable finite POMDP. Rows are stored per control as compressed lists of
/// joint outcomes so that observation models may optionally depend on the
/// origin state as well as the successor.
class TabularPomdp {
 public:
  std::size_t state_count() const { return n_; }
  std::size_t control_count() const { return controls_.size(); }
  std::size_t observation_count() const { return observations_.size(); }
  double discount() const { return discount_; }
  const std::vector<std::string>& control_names() const { return controls_; }
  const std::vector<std::string>& observation_names() const { return observations_; }

  std::span<const Outcome> outcomes(StateIndex i, ControlIndex u) const {
    const auto& rb = row_begin_[u];
    return {outcomes_[u].data() + rb[i], outcomes_[u].data() + rb[i + 1]};
  }

  void check_control(ControlIndex u) const {
    if (u >= controls_.size()) throw InvalidArgument("unknown control index " + std::to_string(u));
  }
  void check_observation(ObservationIndex z) const {
    if (z >= observations_.size()) throw InvalidArgument("unknown observation index " + std::to_string(z));
  }
  void check_belief(const Belief& b) const {
    if (b.dimension() != n_) throw InvalidArgument("belief dimension does not match model");
  }

  /// Successor distribution p_i.(u) with duplicates merged.
  std::vector<WeightedIndex> transition_row(StateIndex i, ControlIndex u) const {
    std::vector<WeightedIndex> row;
    for (const auto& o : outcomes(i, u)) row.push_back({o.next, o.probability});
    return normalize_and_merge(std::move(row));
  }

 private:
  friend class PomdpBuilder;

  static std::vector<WeightedIndex> normalize_and_merge(std::vector<WeightedIndex> row) {
    std::sort(row.begin(), row.end(), [](auto& a, auto& b) { return a.index < b.index; });
    std::vector<WeightedIndex> out;
    for (const auto& e : row) {
      if (!out.empty() && out.back().index == e.index) {
        out.back().weight += e.weight;
      } else {
        out.push_back(e);
      }
    }
    return out;
  }

  std::size_t n_ = 0;
  std::vector<std::string> controls_;
  std::vector<std::string> observations_;
  double discount_ = 0.0;
  std::vector<std::vector<std::size_t>> row_begin_;
  std::vector<std::vector<Outcome>> outcomes_;
};

/// Accumulates sparse model entries and validates them on build().
class PomdpBuilder {
 public:
  PomdpBuilder(std::size_t n, std::vector<std::string> controls, std::vector<std::string> observations, double discount)
      : n_(n), controls_(std::move(controls)), observations_(std::move(observations)), discount_(discount) {
    if (n_ == 0) throw InvalidModel("model needs at least one state");
    if (controls_.empty()) throw InvalidModel("model needs at least one control");
    if (observations_.empty()) throw InvalidModel("model needs at least one observation");
    if (!(discount_ > 0.0 && discount_ < 1.0)) throw InvalidModel("discount must lie in (0,1)");
    transitions_.resize(controls_.size());
    observation_.resize(controls_.size());
    branch_observation_.resize(controls_.size());
  }

  std::size_t state_count() const { return n_; }

  PomdpBuilder& add_transition(ControlIndex u, StateIndex i, StateIndex j, double p) {
    check(u, i, j);
    check_probability(p);
    transitions_[u][{i, j}] += p;
    return *this;
  }

  /// p(z | j, u), shared by every origin state.
  PomdpBuilder& add_observation(ControlIndex u, StateIndex j, ObservationIndex z, double p) {
    check(u, j, j);
    check_z(z);
    check_probability(p);
    observation_[u][j][z] += p;
    return *this;
  }

  /// p(z | i, j, u) for a single transition branch; overrides the shared row.
  PomdpBuilder& add_branch_observation(ControlIndex u, StateIndex i, StateIndex j, ObservationIndex z, double p) {
    check(u, i, j);
    check_z(z);
    check_probability(p);
    branch_observation_[u][{i, j}][z] += p;
    return *this;
  }

  PomdpBuilder& set_cost(StateIndex i, ControlIndex u, StateIndex j, double g) {
    check(u, i, j);
    if (!std::isfinite(g)) throw InvalidModel("costs must be finite");
    cost_[{i, u, j}] = g;
    return *this;
  }

  TabularPomdp build(bool renormalize = false) const {
    TabularPomdp m;
    m.n_ = n_;
    m.controls_ = controls_;
    m.observations_ = observations_;
    m.discount_ = discount_;
    m.row_begin_.assign(controls_.size(), {});
    m.outcomes_.assign(controls_.size(), {});
    for (ControlIndex u = 0; u < controls_.size(); ++u) {
      auto shared_obs = observation_distributions(u, renormalize);
      auto& rb = m.row_begin_[u];
      auto& out = m.outcomes_[u];
      rb.assign(n_ + 1, 0);
      auto it = transitions_[u].begin();
      for (StateIndex i = 0; i < n_; ++i) {
        rb[i] = out.size();
        std::vector<std::pair<StateIndex, double>> row;
        double total = 0.0;
        for (; it != transitions_[u].end() && it->first.first == i; ++it) {
          if (it->second > 0.0) row.emplace_back(it->first.second, it->second);
          total += it->second;
        }
        if (std::abs(total - 1.0) > kModelTolerance) {
          if (!renormalize || !(total > 0.0)) {
            throw InvalidModel("transition row (i=" + std::to_string(i) + ", u=" + std::to_string(u) + ") sums to " +
                               std::to_string(total));
          }
        }
        for (auto& [j, p] : row) {
          p /= (renormalize ? total : 1.0);
          auto zs = branch_distribution(u, i, j, renormalize);
          if (!zs) {
            auto sh = shared_obs.find(j);
            if (sh == shared_obs.end()) {
              if (observations_.size() == 1) {
                zs = std::vector<std::pair<ObservationIndex, double>>{{0, 1.0}};
              } else {
                throw InvalidModel("no observation distribution for successor " + std::to_string(j) +
                                   " under control " + std::to_string(u));
              }
            } else {
              zs = sh->second;
            }
          }
          double g = 0.0;
          if (auto c = cost_.find({i, u, j}); c != cost_.end()) g = c->second;
          for (auto [z, pz] : *zs) {
            if (pz > 0.0) out.push_back({j, z, p * pz, g});
          }
        }
      }
      rb[n_] = out.size();
    }
    return m;
  }

 private:
  using ZDist = std::vector<std::pair<ObservationIndex, double>>;

  void check(ControlIndex u, StateIndex i, StateIndex j) const {
    if (u >= controls_.size()) throw InvalidModel("control index out of range");
    if (i >= n_ || j >= n_) throw InvalidModel("state index out of range");
  }
  void check_z(ObservationIndex z) const {
    if (z >= observations_.size()) throw InvalidModel("observation index out of range");
  }
  static void check_probability(double p) {
    if (!(p >= 0.0 && p <= 1.0 + kModelTolerance)) throw InvalidModel("probability outside [0,1]");
  }

  static ZDist finish(const std::map<ObservationIndex, double>& zs, bool renormalize, const std::string& where) {
    double total = 0.0;
    for (auto& [z, p] : zs) total += p;
    if (std::abs(total - 1.0) > kModelTolerance && (!renormalize || !(total > 0.0))) {
      throw InvalidModel("observation distribution " + where + " sums to " + std::to_string(total));
    }
    ZDist out;
    for (auto& [z, p] : zs) out.emplace_back(z, renormalize ? p / total : p);
    return out;
  }

  std::map<StateIndex, ZDist> observation_distributions(ControlIndex u, bool renormalize) const {
    std::map<StateIndex, ZDist> out;
    for (auto& [j, zs] : observation_[u]) {
      out[j] = finish(zs, renormalize, "(j=" + std::to_string(j) + ", u=" + std::to_string(u) + ")");
    }
    return out;
  }

  std::optional<ZDist> branch_distribution(ControlIndex u, StateIndex i, StateIndex j, bool renormalize) const {
    auto it = branch_observation_[u].find({i, j});
    if (it == branch_observation_[u].end()) return std::nullopt;
    return finish(it->second, renormalize,
                  "(i=" + std::to_string(i) + ", j=" + std::to_string(j) + ", u=" + std::to_string(u) + ")");
  }

  std::size_t n_;
  std::vector<std::string> controls_;
  std::vector<std::string> observations_;
  double discount_;
  std::vector<std::map<std::pair<StateIndex, StateIndex>, double>> transitions_;
  std::vector<std::map<StateIndex, std::map<ObservationIndex, double>>> observation_;
  std::vector<std::map<std::pair<StateIndex, StateIndex>, std::map<ObservationIndex, double>>> branch_observation_;
  std::map<std::tuple<StateIndex, ControlIndex, StateIndex>, double> cost_;
};

// ---------------------------------------------------------------------------
// Belief calculus

/// Expected one-stage cost ĝ(b,u).
inline double stage_cost(const TabularPomdp& m, const Belief& b, ControlIndex u) {
  m.check_control(u);
  m.check_belief(b);
  double s = 0.0;
  for (const auto& [i, w] : b) {
    double row = 0.0;
    for (const auto& o : m.outcomes(i, u)) row += o.probability * o.cost;
    s += w * row;
  }
  return s;
}

/// p̂(z | b, u).
inline double observation_prob(const TabularPomdp& m, const Belief& b, ControlIndex u, ObservationIndex z) {
  m.check_control(u);
  m.check_observation(z);
  m.check_belief(b);
  double s = 0.0;
  for (const auto& [i, w] : b) {
    double row = 0.0;
    for (const auto& o : m.outcomes(i, u)) {
      if (o.observation == z) row += o.probability;
    }
    s += w * row;
  }
  return s;
}

/// Bayes posterior F(b,u,z).
inline Belief belief_update(const TabularPomdp& m, const Belief& b, ControlIndex u, ObservationIndex z) {
  m.check_control(u);
  m.check_observation(z);
  m.check_belief(b);
  std::vector<WeightedIndex> raw;
  double total = 0.0;
  for (const auto& [i, w] : b) {
    for (const auto& o : m.outcomes(i, u)) {
      if (o.observation != z) continue;
      raw.push_back({o.next, w * o.probability});
      total += w * o.probability;
    }
  }
  if (!(total > 0.0)) {
    throw ImpossibleObservation("observation " + std::to_string(z) + " has zero probability under control " +
                                std::to_string(u));
  }
  return Belief(trusted, m.state_count(), normalize_and_prune(std::move(raw)));
}

/// One-step predicted belief Σ_i b(i) p_i.(u).
inline Belief predicted_belief(const TabularPomdp& m, const Belief& b, ControlIndex u) {
  m.check_control(u);
  m.check_belief(b);
  std::vector<WeightedIndex> raw;
  for (const auto& [i, w] : b) {
    for (const auto& o : m.outcomes(i, u)) raw.push_back({o.next, w * o.probability});
  }
  return Belief(trusted, m.state_count(), normalize_and_prune(std::move(raw)));
}

struct ObservationBranch {
  ObservationIndex observation;
  double probability;
  Belief posterior;
};

struct Expansion {
  double stage_cost;
  std::vector<ObservationBranch> branches;  // observations with p̂ > 0, ascending
};

/// ĝ(b,u) together with every positive-probability posterior, computed in a
/// single pass over the support of b.
inline Expansion expand(const TabularPomdp& m, const Belief& b, ControlIndex u) {
  m.check_control(u);
  m.check_belief(b);
  struct Mass {
    ObservationIndex z;
    StateIndex j;
    double w;
  };
  std::vector<Mass> mass;
  double g = 0.0;
  for (const auto& [i, w] : b) {
    double row = 0.0;
    for (const auto& o : m.outcomes(i, u)) {
      row += o.probability * o.cost;
      mass.push_back({o.observation, o.next, w * o.probability});
    }
    g += w * row;
  }
  std::stable_sort(mass.begin(), mass.end(), [](const Mass& a, const Mass& c) { return a.z < c.z; });
  Expansion ex{g, {}};
  std::size_t k = 0;
  while (k < mass.size()) {
    ObservationIndex z = mass[k].z;
    std::vector<WeightedIndex> raw;
    double total = 0.0;
    for (; k < mass.size() && mass[k].z == z; ++k) {
      raw.push_back({mass[k].j, mass[k].w});
      total += mass[k].w;
    }
    if (total > 0.0) {
      ex.branches.push_back({z, total, Belief(trusted, m.state_count(), normalize_and_prune(std::move(raw)))});
    }
  }
  return ex;
}

}  // namespace fbagg
