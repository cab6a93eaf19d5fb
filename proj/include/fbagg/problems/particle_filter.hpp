#pragma once

#include <vector>

#include "fbagg/pomdp.hpp"
#include "fbagg/random.hpp"
#include "fbagg/rollout.hpp"

namespace fbagg {

struct ParticleSet {
  std::vector<StateIndex> particles;

  std::size_t count() const { return particles.size(); }

  static ParticleSet sample(const Belief& b, std::size_t count, Rng& rng) {
    if (count < 1) throw InvalidArgument("particle count must be positive");
    ParticleSet ps;
    ps.particles.reserve(count);
    for (std::size_t k = 0; k < count; ++k) ps.particles.push_back(sample_weighted(b.entries(), rng));
    return ps;
  }

  Belief belief(std::size_t n) const {
    std::vector<WeightedIndex> e;
    for (auto i : particles) e.push_back({i, 1.0});
    return Belief(n, std::move(e), true);
  }
};

inline constexpr std::size_t kRejectionFactor = 1000;

/// Rejection sampling: propagate a random particle, keep the successor when
/// the simulated observation matches z. After kRejectionFactor·count
/// consecutive rejections the remaining particles are drawn from the
/// likelihood-weighted predictive distribution of the current particles.
inline ParticleSet particle_update(const TabularPomdp& m, const ParticleSet& ps, ControlIndex u, ObservationIndex z, Rng& rng) {
  if (ps.particles.empty()) throw InvalidArgument("particle set is empty");
  m.check_control(u);
  m.check_observation(z);
  const std::size_t count = ps.count();
  ParticleSet out;
  out.particles.reserve(count);
  std::size_t rejections = 0;
  while (out.count() < count) {
    StateIndex i = ps.particles[uniform_index(rng, count)];
    const Outcome& o = detail::sample_outcome(m.outcomes(i, u), rng);
    if (o.observation == z) {
      out.particles.push_back(o.next);
      rejections = 0;
      continue;
    }
    if (++rejections < kRejectionFactor * count) continue;
    std::vector<WeightedIndex> w;
    for (auto p : ps.particles) {
      for (const auto& oc : m.outcomes(p, u)) {
        if (oc.observation == z) w.push_back({oc.next, oc.probability});
      }
    }
    if (w.empty()) throw ImpossibleObservation("observation impossible under every particle");
    Belief fallback(m.state_count(), std::move(w), true);
    while (out.count() < count) out.particles.push_back(sample_weighted(fallback.entries(), rng));
  }
  return out;
}

/// Estimator for rollout_cost that resamples `count` particles from the
/// current belief and returns the empirical posterior.
inline BeliefEstimator particle_estimator(const TabularPomdp& m, std::size_t count) {
  return [&m, count](const Belief& b, ControlIndex u, ObservationIndex z, Rng& rng) {
    ParticleSet ps = ParticleSet::sample(b, count, rng);
    return particle_update(m, ps, u, z, rng).belief(m.state_count());
  };
}

}  // namespace fbagg
