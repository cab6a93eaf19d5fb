#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fbagg/parallel.hpp"
#include "fbagg/pomdp.hpp"
#include "fbagg/random.hpp"

namespace fbagg {

using Policy = std::function<ControlIndex(const Belief&)>;

/// Replaces exact Bayes filtering during simulation (e.g. a particle filter).
using BeliefEstimator = std::function<Belief(const Belief&, ControlIndex, ObservationIndex, Rng&)>;

struct RolloutOptions {
  std::size_t horizon = 100;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  BeliefEstimator estimator;  // empty: belief_update
};

struct RolloutResult {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t trials = 0;
  std::size_t horizon = 0;
};

struct TraceRow {
  std::size_t stage;
  ObservationIndex observation;
  ControlIndex control;
  double belief_entropy;
  double discounted_cost;  // running total after this stage
};

namespace detail {

inline const Outcome& sample_outcome(std::span<const Outcome> row, Rng& rng) {
  double r = uniform01(rng);
  double acc = 0.0;
  for (const auto& o : row) {
    acc += o.probability;
    if (r < acc) return o;
  }
  return row.back();
}

inline ControlIndex checked_control(const TabularPomdp& m, const Policy& policy, const Belief& b) {
  ControlIndex u = policy(b);
  if (u >= m.control_count()) throw InvalidPolicy("policy returned control " + std::to_string(u));
  return u;
}

/// Simulates one trajectory; `trace` receives one row per stage when non-null.
inline double simulate(const TabularPomdp& m, const Policy& policy, const Belief& b0, std::size_t horizon,
                       const BeliefEstimator& estimator, Rng& rng, std::vector<TraceRow>* trace) {
  Belief b = b0;
  StateIndex i = sample_weighted(b0.entries(), rng);
  double total = 0.0;
  double factor = 1.0;
  for (std::size_t k = 0; k < horizon; ++k) {
    ControlIndex u = checked_control(m, policy, b);
    const Outcome& o = sample_outcome(m.outcomes(i, u), rng);
    total += factor * o.cost;
    factor *= m.discount();
    b = estimator ? estimator(b, u, o.observation, rng) : belief_update(m, b, u, o.observation);
    i = o.next;
    if (trace) trace->push_back({k, o.observation, u, b.entropy(), total});
  }
  return total;
}

}  // namespace detail

/// Monte-Carlo estimate of the discounted cost of `policy` from b0. Trial t
/// uses the stream make_rng(seed, t), so results do not depend on threads.
inline RolloutResult rollout_cost(const TabularPomdp& m, const Policy& policy, const Belief& b0,
                                  const RolloutOptions& opt = {}) {
  if (opt.horizon < 1 || opt.trials < 1) throw InvalidArgument("horizon and trials must be positive");
  m.check_belief(b0);
  std::vector<double> costs(opt.trials);
  parallel_for(opt.trials, opt.threads, [&](std::size_t t) {
    Rng rng = make_rng(opt.seed, t);
    costs[t] = detail::simulate(m, policy, b0, opt.horizon, opt.estimator, rng, nullptr);
  });
  double sum = 0.0;
  for (double c : costs) sum += c;
  RolloutResult r{sum / static_cast<double>(opt.trials), 0.0, opt.trials, opt.horizon};
  if (opt.trials > 1) {
    double ss = 0.0;
    for (double c : costs) ss += (c - r.mean) * (c - r.mean);
    r.std_error = std::sqrt(ss / static_cast<double>(opt.trials - 1) / static_cast<double>(opt.trials));
  }
  return r;
}

/// Stage-by-stage record of the first trial of rollout_cost with the same seed.
inline std::vector<TraceRow> rollout_trace(const TabularPomdp& m, const Policy& policy, const Belief& b0,
                                           const RolloutOptions& opt = {}) {
  std::vector<TraceRow> trace;
  Rng rng = make_rng(opt.seed, 0);
  detail::simulate(m, policy, b0, opt.horizon, opt.estimator, rng, &trace);
  return trace;
}

}  // namespace fbagg
