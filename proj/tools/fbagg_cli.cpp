// fbagg: solve, evaluate and diagnose feature-based belief aggregation.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fbagg/fbagg.hpp"
#include "fbagg/io.hpp"

namespace {

using namespace fbagg;
using io::json;

constexpr int kExitOk = 0;
constexpr int kExitNotConverged = 2;
constexpr int kExitBoundViolation = 3;
constexpr int kExitConfig = 4;

struct Problem {
  std::string name;
  TabularPomdp model;
  std::optional<TreasureSpec> treasure;
  std::optional<RockSampleSpec> rocksample;
};

struct Options {
  std::string problem = "treasure:N=1";
  std::string features = "max-value";
  std::vector<std::uint32_t> rho = {10};
  std::string psi = "nearest";
  std::string mode = "sync";
  std::string expansion = "eager";
  std::string seed_belief = "initial";
  std::string initial_belief = "initial";
  double tolerance = 1e-9;
  std::size_t max_sweeps = 100000;
  std::string bias;
  std::string solution;
  std::string out;
  std::string format = "json";
  std::size_t threads = 1;
  std::size_t horizon = 100;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  std::string policy = "lookahead";
  std::string trace;
  std::size_t samples = 1000;
  std::uint32_t oracle_rho = 0;
  double slack = 1e-3;
  std::string what = "problem";
  std::string from_belief;
  std::string to_belief;
  std::size_t points = 201;
};

std::string default_path(const std::string& given, const std::string& fallback) {
  if (!given.empty()) return given;
  const char* dir = std::getenv("FBAGG_OUTPUT_DIR");
  if (dir && *dir) return (std::filesystem::path(dir) / fallback).string();
  return fallback;
}

std::string after(const std::string& s, const std::string& prefix) { return s.substr(prefix.size()); }

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

Problem load_problem(const std::string& src) {
  Problem p;
  p.name = src;
  if (starts_with(src, "treasure:")) {
    std::string arg = after(src, "treasure:");
    if (!starts_with(arg, "N=")) throw InvalidArgument("treasure preset must look like treasure:N=3");
    auto spec = TreasureSpec::standard(std::stoul(after(arg, "N=")));
    p.model = build_treasure(spec);
    p.treasure = spec;
    return p;
  }
  if (starts_with(src, "rocksample:")) {
    std::string arg = after(src, "rocksample:");
    auto x = arg.find('x');
    if (x == std::string::npos) throw InvalidArgument("rocksample preset must look like rocksample:4x4");
    auto spec = RockSampleSpec::standard(std::stoi(arg.substr(0, x)), std::stoi(arg.substr(x + 1)));
    p.model = build_rocksample(spec);
    p.rocksample = spec;
    return p;
  }
  p.model = io::problem_from_json(io::read_json_file(src));
  return p;
}

FeatureScheme load_features(const Problem& p, const std::string& src) {
  const std::size_t n = p.model.state_count();
  if (src == "identity" || src == "flat") return identity_scheme(n);
  if (src == "max-value" || src == "max-value:sparse") {
    if (!p.treasure) throw InvalidArgument("max-value features need a treasure problem");
    auto d = src == "max-value" ? TreasureDisaggregation::uniform : TreasureDisaggregation::sparse;
    return treasure_feature_scheme(*p.treasure, TreasureFeatureMode::max_value, 0, d);
  }
  if (starts_with(src, "grouped:")) {
    if (!p.treasure) throw InvalidArgument("grouped features need a treasure problem");
    return treasure_feature_scheme(*p.treasure, TreasureFeatureMode::grouped, std::stoul(after(src, "grouped:")));
  }
  if (src == "grid3x3") {
    if (!p.rocksample) throw InvalidArgument("grid3x3 features need a rocksample problem");
    return rs_feature_scheme(*p.rocksample, RockSampleFeatureMode::grid3x3);
  }
  auto s = io::scheme_from_json(io::read_json_file(src), n);
  require_valid(s);
  return s;
}

/// initial: the preset's start belief (all treasures present; rover at start).
Belief load_belief(const Problem& p, const std::string& src) {
  const std::size_t n = p.model.state_count();
  if (src == "uniform") {
    std::vector<StateIndex> all(n);
    for (StateIndex i = 0; i < n; ++i) all[i] = i;
    return Belief::uniform(n, all);
  }
  if (src == "initial") {
    if (p.treasure) return Belief::point(n, p.treasure->terminal() - 1);
    if (p.rocksample) return rocksample_initial_belief(*p.rocksample);
    return Belief::point(n, 0);
  }
  if (starts_with(src, "state:")) return Belief::point(n, static_cast<StateIndex>(std::stoul(after(src, "state:"))));
  return io::belief_from_json(io::read_json_file(src), n);
}

SweepMode parse_mode(const std::string& s) {
  if (s == "sync") return SweepMode::sync;
  if (s == "async") return SweepMode::async;
  throw InvalidArgument("unknown mode '" + s + "'");
}

ExpansionMode parse_expansion(const std::string& s) {
  if (s == "eager") return ExpansionMode::eager;
  if (s == "lazy") return ExpansionMode::lazy;
  throw InvalidArgument("unknown expansion '" + s + "'");
}

std::optional<BiasFunction> load_bias(const Options& o, const FeatureScheme& scheme) {
  if (o.bias.empty()) return std::nullopt;
  auto sol = io::solution_from_json(io::read_json_file(o.bias));
  if (!sol.bias_tag.empty()) throw InvalidArgument("bias solution is itself biased");
  auto ca = std::make_shared<const CostApprox>(scheme, std::move(sol));
  return bias_from(ca, "solution " + o.bias);
}

std::uint32_t single_rho(const Options& o) {
  if (o.rho.size() != 1) throw InvalidArgument("expected a single --rho value");
  if (o.rho[0] == 0) throw InvalidArgument("--rho must be positive");
  return o.rho[0];
}

int cmd_solve(const Options& o) {
  Problem p = load_problem(o.problem);
  FeatureScheme scheme = load_features(p, o.features);
  const std::uint32_t rho = single_rho(o);
  SolverConfig cfg;
  cfg.tolerance = o.tolerance;
  cfg.max_sweeps = o.max_sweeps;
  cfg.threads = o.threads;
  cfg.expansion = parse_expansion(o.expansion);
  cfg.bias = load_bias(o, scheme);
  PsiMode psi = io::psi_from_string(o.psi);
  if (cfg.expansion == ExpansionMode::lazy) {
    FeatureBelief q = aggregate_features(scheme, load_belief(p, o.seed_belief));
    for (const auto& wp : psi_weights(q, rho, psi)) cfg.seeds.push_back(wp.point);
  }
  auto v = solve(p.model, scheme, rho, psi, parse_mode(o.mode), cfg);
  std::string path = default_path(o.out, "solution.json");
  io::write_text_file(path, io::solution_to_json(v).dump(1) + "\n");
  std::cout << "residual " << v.residual << "\nbellman_residual " << v.bellman_residual << "\nsweeps " << v.iterations
            << "\ntable_size " << v.size() << "\nwall_seconds " << v.seconds << "\nconverged "
            << (v.converged ? "yes" : "no") << "\nwrote " << path << "\n";
  return v.converged ? kExitOk : kExitNotConverged;
}

int cmd_evaluate(const Options& o) {
  Problem p = load_problem(o.problem);
  FeatureScheme scheme = load_features(p, o.features);
  Belief b0 = load_belief(p, o.initial_belief);
  std::optional<CostApprox> ca;
  Policy policy;
  std::string rho = "", psi = "";
  if (o.policy == "lookahead") {
    if (o.solution.empty()) throw InvalidArgument("lookahead evaluation needs --solution");
    ca.emplace(scheme, io::solution_from_json(io::read_json_file(o.solution)), load_bias(o, scheme));
    policy = lookahead_policy(*ca, p.model);
    rho = std::to_string(ca->rho());
    psi = to_string(ca->psi_mode());
  } else if (starts_with(o.policy, "control:")) {
    std::string name = after(o.policy, "control:");
    const auto& names = p.model.control_names();
    auto it = std::find(names.begin(), names.end(), name);
    ControlIndex u = it != names.end() ? static_cast<ControlIndex>(it - names.begin()) : std::stoul(name);
    p.model.check_control(u);
    policy = constant_policy(u);
  } else {
    throw InvalidArgument("unknown policy '" + o.policy + "'");
  }
  RolloutOptions ro;
  ro.horizon = o.horizon;
  ro.trials = o.trials;
  ro.seed = o.seed;
  ro.threads = o.threads;
  auto t0 = std::chrono::steady_clock::now();
  auto r = rollout_cost(p.model, policy, b0, ro);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream text;
  text.precision(17);
  if (o.format == "csv") {
    text << "problem,rho,psi,policy,mean_cost,std_error,trials,horizon,seed,wall_seconds\n";
    text << p.name << ',' << rho << ',' << psi << ',' << o.policy << ',' << r.mean << ',' << r.std_error << ','
         << r.trials << ',' << r.horizon << ',' << o.seed << ',' << secs << '\n';
  } else if (o.format == "json") {
    json j{{"problem", p.name}, {"rho", rho}, {"psi", psi}, {"policy", o.policy}, {"mean_cost", r.mean},
           {"std_error", r.std_error}, {"trials", r.trials}, {"horizon", r.horizon}, {"seed", o.seed},
           {"wall_seconds", secs}};
    text << j.dump(1) << '\n';
  } else {
    throw InvalidArgument("unknown format '" + o.format + "'");
  }
  std::string path = default_path(o.out, o.format == "csv" ? "evaluation.csv" : "evaluation.json");
  io::write_text_file(path, text.str());
  if (!o.trace.empty()) io::write_text_file(o.trace, io::trace_to_csv(rollout_trace(p.model, policy, b0, ro), p.model));
  std::cout << "mean_cost " << r.mean << "\nstd_error " << r.std_error << "\nwall_seconds " << secs << "\nwrote " << path
            << "\n";
  if (ca && ca->misses() > 0) std::cout << "table_misses " << ca->misses() << "\n";
  return kExitOk;
}

int cmd_diagnose(const Options& o) {
  Problem p = load_problem(o.problem);
  FeatureScheme scheme = load_features(p, o.features);
  PsiMode psi = io::psi_from_string(o.psi);
  std::optional<BiasFunction> bias = load_bias(o, scheme);
  std::cout << "building oracle\n";
  ExactOracle oracle = o.oracle_rho ? ExactOracle(p.model, o.oracle_rho) : exact_oracle(p.model);
  json reports = json::array();
  bool ok = true;
  for (std::uint32_t rho : o.rho) {
    if (rho == 0) throw InvalidArgument("--rho must be positive");
    SolverConfig cfg;
    cfg.tolerance = o.tolerance;
    cfg.max_sweeps = o.max_sweeps;
    cfg.threads = o.threads;
    cfg.bias = bias;
    auto v = solve(p.model, scheme, rho, psi, parse_mode(o.mode), cfg);
    CostApprox ca(scheme, v, bias);
    BoundOptions bo;
    bo.sample_count = o.samples;
    bo.seed = o.seed;
    bo.slack = o.slack;
    auto rep = bound_report(ca, p.model, oracle, bo);
    json j = io::bound_report_to_json(rep);
    j["rho"] = rho;
    j["psi_mode"] = to_string(psi);
    j["converged"] = v.converged;
    reports.push_back(j);
    ok = ok && rep.bound_holds && rep.lower_bound_holds && v.converged;
    std::cout << "rho " << rho << " sup_error " << rep.sup_error << " bound " << rep.bound << " over "
              << rep.max_violation_over << (rep.bound_holds && rep.lower_bound_holds ? "" : " VIOLATION") << "\n";
  }
  json out{{"problem", p.name}, {"features", o.features}, {"oracle_rho", oracle.resolution()}, {"reports", reports}};
  std::string path = default_path(o.out, "bound_report.json");
  io::write_text_file(path, out.dump(1) + "\n");
  std::cout << "wrote " << path << "\n";
  return ok ? kExitOk : kExitBoundViolation;
}

int cmd_export(const Options& o) {
  Problem p = load_problem(o.problem);
  std::string text;
  if (o.what == "problem") {
    text = io::problem_to_json(p.model).dump(1) + "\n";
  } else if (o.what == "features") {
    text = io::scheme_to_json(load_features(p, o.features)).dump(1) + "\n";
  } else if (o.what == "curve") {
    if (o.solution.empty()) throw InvalidArgument("curve export needs --solution");
    if (o.from_belief.empty() || o.to_belief.empty()) throw InvalidArgument("curve export needs --from and --to");
    if (o.points < 2) throw InvalidArgument("--points must be at least 2");
    FeatureScheme scheme = load_features(p, o.features);
    CostApprox ca(scheme, io::solution_from_json(io::read_json_file(o.solution)), load_bias(o, scheme));
    auto a = load_belief(p, o.from_belief).dense(), b = load_belief(p, o.to_belief).dense();
    std::optional<ExactOracle> oracle;
    if (o.oracle_rho) oracle.emplace(p.model, o.oracle_rho);
    std::ostringstream csv;
    csv.precision(17);
    csv << "t,j_tilde" << (oracle ? ",j_star" : "") << "\n";
    for (std::size_t k = 0; k < o.points; ++k) {
      double t = static_cast<double>(k) / static_cast<double>(o.points - 1);
      std::vector<double> mix(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) mix[i] = (1 - t) * a[i] + t * b[i];
      Belief bl = Belief::from_dense(mix, true);
      csv << t << ',' << ca(bl);
      if (oracle) csv << ',' << (*oracle)(bl);
      csv << '\n';
    }
    text = csv.str();
  } else {
    throw InvalidArgument("unknown export target '" + o.what + "'");
  }
  if (o.out.empty() && !std::getenv("FBAGG_OUTPUT_DIR")) {
    std::cout << text;
  } else {
    std::string path = default_path(o.out, o.what == "curve" ? "curve.csv" : o.what + ".json");
    io::write_text_file(path, text);
    std::cout << "wrote " << path << "\n";
  }
  return kExitOk;
}

void add_model_options(CLI::App* c, Options& o) {
  c->add_option("--problem", o.problem, "treasure:N=.., rocksample:4x4|5x5|5x7|7x8, or a problem file");
  c->add_option("--features", o.features, "max-value, max-value:sparse, grouped:L, identity, grid3x3, or a scheme file");
  c->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  c->add_option("--bias", o.bias, "unbiased solution file used as the bias V");
}

void add_solver_options(CLI::App* c, Options& o) {
  c->add_option("--psi", o.psi, "nearest or convex");
  c->add_option("--mode", o.mode, "sync or async");
  c->add_option("--tolerance", o.tolerance, "sup-norm stopping threshold");
  c->add_option("--max-sweeps", o.max_sweeps, "sweep limit");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-based belief aggregation for finite POMDPs"};
  app.require_subcommand(1);
  Options o;

  auto* solve_cmd = app.add_subcommand("solve", "solve the aggregate problem and write a solution file");
  add_model_options(solve_cmd, o);
  add_solver_options(solve_cmd, o);
  solve_cmd->add_option("--rho", o.rho, "grid resolution")->expected(1);
  solve_cmd->add_option("--expansion", o.expansion, "eager or lazy");
  solve_cmd->add_option("--seed-belief", o.seed_belief, "lazy seed: initial, uniform, state:i, or a belief file");
  solve_cmd->add_option("--out", o.out, "solution file");

  auto* eval_cmd = app.add_subcommand("evaluate", "simulate the lookahead policy of a solution");
  add_model_options(eval_cmd, o);
  eval_cmd->add_option("--solution", o.solution, "solution file");
  eval_cmd->add_option("--policy", o.policy, "lookahead or control:<name|index>");
  eval_cmd->add_option("--initial-belief", o.initial_belief, "initial, uniform, state:i, or a belief file");
  eval_cmd->add_option("--horizon", o.horizon, "stages per trial")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--trials", o.trials, "simulation trials")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", o.seed, "random seed");
  eval_cmd->add_option("--format", o.format, "json or csv");
  eval_cmd->add_option("--out", o.out, "report file");
  eval_cmd->add_option("--trace", o.trace, "CSV trace of the first trial");

  auto* diag_cmd = app.add_subcommand("diagnose", "compare against the exact oracle and check the error bounds");
  add_model_options(diag_cmd, o);
  add_solver_options(diag_cmd, o);
  diag_cmd->add_option("--rho", o.rho, "one or more grid resolutions")->delimiter(',');
  diag_cmd->add_option("--samples", o.samples, "random belief samples");
  diag_cmd->add_option("--seed", o.seed, "random seed");
  diag_cmd->add_option("--oracle-rho", o.oracle_rho, "oracle resolution (default by state count)");
  diag_cmd->add_option("--slack", o.slack, "oracle slack added to bound checks");
  diag_cmd->add_option("--out", o.out, "bound report file");

  auto* export_cmd = app.add_subcommand("export", "write problem, feature or plot data");
  add_model_options(export_cmd, o);
  export_cmd->add_option("--what", o.what, "problem, features, or curve");
  export_cmd->add_option("--solution", o.solution, "solution file (curve)");
  export_cmd->add_option("--from", o.from_belief, "curve start belief");
  export_cmd->add_option("--to", o.to_belief, "curve end belief");
  export_cmd->add_option("--points", o.points, "curve points");
  export_cmd->add_option("--oracle-rho", o.oracle_rho, "add an oracle column at this resolution");
  export_cmd->add_option("--out", o.out, "output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*solve_cmd) return cmd_solve(o);
    if (*eval_cmd) return cmd_evaluate(o);
    if (*diag_cmd) return cmd_diagnose(o);
    if (*export_cmd) return cmd_export(o);
  } catch (const InfeasibleOracle& e) {
    std::cerr << "error: oracle infeasible: " << e.what() << "\n";
    return kExitConfig;
  } catch (const GridOverflow& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}
