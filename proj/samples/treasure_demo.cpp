// Solve the two-site treasure problem and print J̃ next to the exact cost.

#include <cstdio>
#include <vector>

#include "fbagg/fbagg.hpp"

int main() {
  using namespace fbagg;
  auto spec = TreasureSpec::standard(2);
  auto model = build_treasure(spec);
  auto scheme = treasure_feature_scheme(spec, TreasureFeatureMode::max_value, 0, TreasureDisaggregation::sparse);

  auto solution = solve_sync(model, scheme, 10, PsiMode::convex);
  std::printf("table %zu points, %zu sweeps, residual %.2e\n", solution.size(), solution.iterations, solution.residual);
  CostApprox approx(scheme, solution);

  auto oracle = exact_oracle(model);
  auto policy = lookahead_policy(approx, model);
  std::printf("%6s %6s %10s %10s %s\n", "p1", "p2", "J~", "J*", "control");
  for (double p1 : {0.2, 0.6, 1.0}) {
    for (double p2 : {0.2, 0.6, 1.0}) {
      std::vector<double> p = {p1, p2};
      Belief b = treasure_product_belief(spec, p);
      std::printf("%6.2f %6.2f %10.4f %10.4f %s\n", p1, p2, approx(b), oracle(b),
                  model.control_names()[policy(b)].c_str());
    }
  }

  RolloutOptions opt;
  opt.trials = 1000;
  auto r = rollout_cost(model, policy, treasure_product_belief(spec, std::vector<double>{1.0, 1.0}), opt);
  std::printf("simulated cost from full sites: %.4f +- %.4f\n", r.mean, r.std_error);
}
