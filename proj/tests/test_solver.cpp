#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <set>

#include "fbagg/fbagg.hpp"
#include "support/random_models.hpp"

using namespace fbagg;

namespace {

struct TreasureCase {
  TreasureSpec spec;
  TabularPomdp model;
  FeatureScheme scheme;

  explicit TreasureCase(std::size_t N)
      : spec(TreasureSpec::standard(N)), model(build_treasure(spec)),
        scheme(treasure_feature_scheme(spec, TreasureFeatureMode::max_value)) {}
};

TabularPomdp zero_cost_model() {
  PomdpBuilder b(3, {"a", "b"}, {"z0", "z1"}, 0.9);
  for (ControlIndex u = 0; u < 2; ++u) {
    b.add_transition(u, 0, 1, 0.5).add_transition(u, 0, 2, 0.5).add_transition(u, 1, 2, 1.0).add_transition(u, 2, 0, 1.0);
    for (StateIndex j = 0; j < 3; ++j) b.add_observation(u, j, 0, 0.3).add_observation(u, j, 1, 0.7);
  }
  return b.build();
}

double sup_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::set<std::vector<std::uint32_t>> keys_of(const AggregateValue& v) {
  std::set<std::vector<std::uint32_t>> out;
  for (std::size_t p = 0; p < v.size(); ++p) out.insert(v.table.key(p).dense());
  return out;
}

/// Breadth-first ψ∘G closure built only from the belief calculus and ψ.
std::set<std::vector<std::uint32_t>> bfs_closure(const TabularPomdp& m, const FeatureScheme& s, std::uint32_t rho,
                                                 PsiMode psi, const GridPoint& seed) {
  std::set<std::vector<std::uint32_t>> seen{seed.dense()};
  std::deque<GridPoint> queue{seed};
  while (!queue.empty()) {
    GridPoint g = queue.front();
    queue.pop_front();
    Belief b = disaggregate(s, g);
    for (ControlIndex u = 0; u < m.control_count(); ++u) {
      for (ObservationIndex z = 0; z < m.observation_count(); ++z) {
        if (observation_prob(m, b, u, z) <= 0.0) continue;
        for (const auto& wp : psi_weights(g_map(s, m, g, u, z), rho, psi)) {
          if (seen.insert(wp.point.dense()).second) queue.push_back(wp.point);
        }
      }
    }
  }
  return seen;
}

}  // namespace

TEST(GMap, ComposesTheThreeOperations) {
  auto m = build_treasure(TreasureSpec::standard(1));
  auto flat = identity_scheme(3);
  GridPoint q(3, 10, {{0, 1}, {1, 9}});
  auto post = g_map(flat, m, q, 0, kTreasureFailure);
  EXPECT_NEAR(post[1], 0.9 * 0.87 / (0.9 * 0.87 + 0.1), 1e-15);
  EXPECT_NEAR(post[1], 0.88674, 1e-5);

  TreasureCase c(1);
  auto one_hot = g_map(c.scheme, c.model, GridPoint(2, 10, {{1, 10}}), 0, kTreasureFailure);
  EXPECT_EQ(one_hot, FeatureBelief::point(2, 1));
  auto absorbed = g_map(c.scheme, c.model, GridPoint(2, 10, {{0, 10}}), 1, kTreasureFailure);
  EXPECT_EQ(absorbed, FeatureBelief::point(2, 0));
  EXPECT_THROW(g_map(c.scheme, c.model, GridPoint(2, 10, {{0, 10}}), 0, kTreasureSuccess), ImpossibleObservation);
}

TEST(GMap, MatchesCompositionOnRandomInstances) {
  Rng rng = make_rng(41);
  for (int t = 0; t < 50; ++t) {
    auto m = fbagg::testing::to_model(fbagg::testing::random_dense_model(rng, 6, 2, 2));
    auto s = fbagg::testing::random_scheme(rng, 6, 3);
    auto grid = enumerate_grid(3, 3);
    const auto& g = grid[uniform_index(rng, grid.size())];
    for (ObservationIndex z = 0; z < 2; ++z) {
      Belief b = disaggregate(s, g);
      if (observation_prob(m, b, 1, z) == 0.0) continue;
      EXPECT_EQ(g_map(s, m, g, 1, z), aggregate_features(s, belief_update(m, b, 1, z)));
    }
  }
}

TEST(ApplyH, ZeroModelIsFixedAtZero) {
  auto m = zero_cost_model();
  auto s = identity_scheme(3);
  AggregateMdp mdp(m, s, 4, PsiMode::convex, RepresentativeTable::eager(3, 4));
  mdp.compile_all();
  std::vector<double> r(mdp.size(), 0.0);
  for (double v : mdp.apply(r)) EXPECT_EQ(v, 0.0);
}

TEST(ApplyH, MonotoneAndContractive) {
  TreasureCase c(2);
  Rng rng = make_rng(42);
  for (PsiMode psi : {PsiMode::hard, PsiMode::convex}) {
    AggregateMdp mdp(c.model, c.scheme, 5, psi, RepresentativeTable::eager(3, 5));
    mdp.compile_all();
    const double alpha = c.model.discount();
    for (int t = 0; t < 100; ++t) {
      std::vector<double> r(mdp.size()), r2(mdp.size()), up(mdp.size());
      for (std::size_t p = 0; p < r.size(); ++p) {
        r[p] = 20.0 * uniform01(rng) - 10.0;
        r2[p] = 20.0 * uniform01(rng) - 10.0;
        up[p] = r[p] + 5.0 * uniform01(rng);
      }
      auto hr = mdp.apply(r), hr2 = mdp.apply(r2), hup = mdp.apply(up);
      for (std::size_t p = 0; p < r.size(); ++p) EXPECT_LE(hr[p], hup[p]);
      EXPECT_LE(sup_diff(hr, hr2), alpha * sup_diff(r, r2) + 1e-12);
    }
  }
}

TEST(ApplyH, LazyTargetsStartAtZero) {
  TreasureCase c(1);
  SolverConfig cfg;
  cfg.expansion = ExpansionMode::lazy;
  AggregateValue v;
  v.table = RepresentativeTable::lazy(2, 10);
  v.table.insert(GridPoint(2, 10, {{1, 10}}));
  v.values = {0.0};
  v.rho = 10;
  AggregateMdp mdp(c.model, c.scheme, 10, PsiMode::hard, v.table);
  auto next = apply_H(v, mdp);
  EXPECT_GE(next.size(), 2u);
  EXPECT_EQ(next.iterations, 1u);
  EXPECT_NEAR(next.values[0], 0.55 - 0.13 * 6.48, 1e-12);
  for (std::size_t p = 1; p < next.size(); ++p) EXPECT_EQ(next.values[p], 0.0);
}

TEST(ApplyHBiased, ZeroBiasEqualsUnbiased) {
  TreasureCase c(2);
  auto v = solve_sync(c.model, c.scheme, 4, PsiMode::convex, {.tolerance = 1e-3});
  AggregateMdp plain(c.model, c.scheme, 4, PsiMode::convex, v.table);
  auto a = apply_H(v, plain);
  auto b = apply_H_biased(v, constant_bias(0.0), c.model, c.scheme);
  EXPECT_EQ(a.values, b.values);
}

TEST(ApplyHBiased, ConstantBiasShiftsEveryComponent) {
  TreasureCase c(2);
  auto v = solve_sync(c.model, c.scheme, 3, PsiMode::hard, {.tolerance = 1e-3});
  AggregateMdp plain(c.model, c.scheme, 3, PsiMode::hard, v.table);
  auto a = apply_H(v, plain);
  const double cst = 7.5, alpha = c.model.discount();
  auto b = apply_H_biased(v, constant_bias(cst), c.model, c.scheme);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t p = 0; p < a.size(); ++p) EXPECT_NEAR(b.values[p], a.values[p] + (alpha * cst - cst), 1e-12);
}

TEST(SolveSync, ZeroCostConvergesInOneSweep) {
  auto m = zero_cost_model();
  auto v = solve_sync(m, identity_scheme(3), 3, PsiMode::hard);
  EXPECT_TRUE(v.converged);
  EXPECT_EQ(v.iterations, 1u);
  for (double x : v.values) EXPECT_EQ(x, 0.0);
}

TEST(SolveSync, ResidualDecaysGeometrically) {
  TreasureCase c(2);
  AggregateMdp mdp(c.model, c.scheme, 5, PsiMode::convex, RepresentativeTable::eager(3, 5));
  mdp.compile_all();
  std::vector<double> r(mdp.size(), 0.0);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 200; ++k) {
    auto next = mdp.apply(r);
    double change = sup_diff(next, r);
    EXPECT_LE(change, c.model.discount() * prev + 1e-12);
    prev = change;
    r.swap(next);
  }
}

TEST(SolveSync, FixedPointResidualWithinBound) {
  for (std::size_t N : {1, 2}) {
    TreasureCase c(N);
    for (PsiMode psi : {PsiMode::hard, PsiMode::convex}) {
      auto v = solve_sync(c.model, c.scheme, 6, psi);
      ASSERT_TRUE(v.converged);
      const double a = c.model.discount();
      EXPECT_LE(v.bellman_residual, 1e-9 * (1 + a) / (1 - a));
      EXPECT_LT(v.residual, 1e-9);
    }
  }
}

TEST(SolveSync, TreasureN1Rho10) {
  TreasureCase c(1);
  auto v = solve_sync(c.model, c.scheme, 10, PsiMode::hard);
  ASSERT_TRUE(v.converged);
  EXPECT_EQ(v.size(), 11u);
  CostApprox ca(c.scheme, v);
  // From certainty of a treasure: (c − βv)/(1 − α(1 − β)).
  EXPECT_NEAR(ca(Belief::point(3, 1)), (0.55 - 0.13 * 6.48) / (1 - 0.99 * 0.87), 1e-8);
  EXPECT_NEAR(ca(Belief::point(3, 1)), -2.10815, 1e-5);
  // Feature 0 splits its mass between the empty and terminal states.
  for (int k = 0; k <= 90; ++k) {
    double p = k / 200.0;
    EXPECT_EQ(ca(Belief::from_dense(std::vector<double>{1 - p, p, 0.0}, true)), 0.0) << p;
  }
  // At (5,5) a failed search maps back onto itself.
  const double g = 0.25 * 0.55 + 0.5 * (0.13 * (0.55 - 6.48) + 0.87 * 0.55);
  const double stay = 1.0 - 0.5 * 0.13;
  EXPECT_NEAR(ca(Belief(3, {{0, 0.25}, {1, 0.5}, {2, 0.25}})), g / (1 - 0.99 * stay), 1e-7);
}

TEST(SolveSync, NonConvergenceIsFlagged) {
  TreasureCase c(1);
  auto v = solve_sync(c.model, c.scheme, 10, PsiMode::hard, {.max_sweeps = 3});
  EXPECT_FALSE(v.converged);
  EXPECT_EQ(v.iterations, 3u);
  EXPECT_EQ(v.size(), 11u);
  EXPECT_THROW(solve_sync(c.model, c.scheme, 10, PsiMode::hard, {.tolerance = 0.0}), InvalidArgument);
  EXPECT_THROW(solve_sync(c.model, c.scheme, 10, PsiMode::hard, {.expansion = ExpansionMode::lazy}), InvalidArgument);
}

TEST(SolveSync, ThreadCountDoesNotChangeValues) {
  TreasureCase c(3);
  auto a = solve_sync(c.model, c.scheme, 6, PsiMode::convex);
  auto b = solve_sync(c.model, c.scheme, 6, PsiMode::convex, {.threads = 4});
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(SolveAsync, SelfLoopScalarFixedPoint) {
  PomdpBuilder b(1, {"expensive", "cheap"}, {"z"}, 0.8);
  b.add_transition(0, 0, 0, 1.0).add_transition(1, 0, 0, 1.0).set_cost(0, 0, 0, 3.0).set_cost(0, 1, 0, 1.0);
  auto m = b.build();
  auto v = solve_async(m, identity_scheme(1), 1, PsiMode::hard, {.tolerance = 1e-12});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NEAR(v.values[0], 1.0 / 0.2, 1e-10);
}

TEST(SolveAsync, AgreesWithSyncOnEagerGrid) {
  TreasureCase c(2);
  for (PsiMode psi : {PsiMode::hard, PsiMode::convex}) {
    auto s = solve_sync(c.model, c.scheme, 5, psi);
    auto a = solve_async(c.model, c.scheme, 5, psi);
    ASSERT_TRUE(s.converged && a.converged);
    EXPECT_LT(sup_diff(s.values, a.values), 1e-7);
    EXPECT_LE(a.iterations, s.iterations);
  }
}

TEST(SolveAsync, LazyClosureMatchesBreadthFirstSearch) {
  struct Case {
    std::size_t N;
    std::uint32_t rho;
    PsiMode psi;
  };
  for (auto [N, rho, psi] : {Case{1, 10, PsiMode::hard}, Case{1, 10, PsiMode::convex}, Case{2, 7, PsiMode::hard},
                             Case{2, 5, PsiMode::convex}}) {
    TreasureCase c(N);
    std::vector<std::uint32_t> d(c.scheme.feature_count(), 0);
    d.back() = rho;
    GridPoint seed = GridPoint::from_dense(d, rho);
    SolverConfig cfg;
    cfg.expansion = ExpansionMode::lazy;
    cfg.seeds = {seed};
    auto a = solve_async(c.model, c.scheme, rho, psi, cfg);
    auto s = solve_sync(c.model, c.scheme, rho, psi, cfg);
    auto expect = bfs_closure(c.model, c.scheme, rho, psi, seed);
    EXPECT_EQ(keys_of(a), expect);
    EXPECT_EQ(keys_of(s), expect);
    EXPECT_LE(a.size(), grid_size(rho, c.scheme.feature_count()));
    // Values on the closure agree with the eager solve restricted to it.
    auto full = solve_sync(c.model, c.scheme, rho, psi);
    for (std::size_t p = 0; p < a.size(); ++p) EXPECT_NEAR(a.values[p], *full.value(a.table.key(p)), 1e-7);
  }
}

TEST(SolveAsync, LazyTableIsClosedUnderPsiG) {
  auto spec = RockSampleSpec::standard(4, 4);
  auto m = build_rocksample(spec);
  auto s = rs_feature_scheme(spec, RockSampleFeatureMode::grid3x3);
  SolverConfig cfg;
  cfg.expansion = ExpansionMode::lazy;
  cfg.tolerance = 1e-6;
  for (const auto& wp : convex_weights(aggregate_features(s, rocksample_initial_belief(spec)), 2)) cfg.seeds.push_back(wp.point);
  auto v = solve_async(m, s, 2, PsiMode::convex, cfg);
  ASSERT_TRUE(v.converged);
  for (std::size_t p = 0; p < v.size(); ++p) {
    GridPoint g = v.table.key(p);
    Belief b = disaggregate(s, g);
    for (ControlIndex u = 0; u < m.control_count(); ++u) {
      for (const auto& br : expand(m, b, u).branches) {
        for (const auto& wp : convex_weights(aggregate_features(s, br.posterior), 2)) {
          ASSERT_TRUE(v.table.find(wp.point).has_value());
        }
      }
    }
  }
}

TEST(Bias, ZeroBiasSolvesAreBitIdentical) {
  TreasureCase c(2);
  for (SweepMode mode : {SweepMode::sync, SweepMode::async}) {
    auto a = solve(c.model, c.scheme, 5, PsiMode::convex, mode);
    SolverConfig cfg;
    cfg.bias = constant_bias(0.0);
    auto b = solve(c.model, c.scheme, 5, PsiMode::convex, mode, cfg);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.iterations, b.iterations);
    EXPECT_EQ(b.bias_tag, cfg.bias->tag);
  }
}
