#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbagg/features.hpp"
#include "fbagg/grid.hpp"
#include "fbagg/policy_eval.hpp"
#include "fbagg/pomdp.hpp"
#include "fbagg/rollout.hpp"
#include "fbagg/solver.hpp"

namespace fbagg::io {

using json = nlohmann::json;

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << text;
}

// ---------------------------------------------------------------------------
// Problem files. Observation entries are [j, z, p] or, for observations that
// depend on the transition branch, [i, j, z, p].

inline TabularPomdp problem_from_json(const json& j, bool renormalize = false) {
  try {
    PomdpBuilder b(j.at("n").get<std::size_t>(), j.at("controls").get<std::vector<std::string>>(),
                   j.at("observations").get<std::vector<std::string>>(), j.at("discount").get<double>());
    for (const auto& block : j.at("transitions")) {
      auto u = block.at("u").get<ControlIndex>();
      for (const auto& e : block.at("entries")) b.add_transition(u, e.at(0).get<StateIndex>(), e.at(1).get<StateIndex>(), e.at(2).get<double>());
    }
    for (const auto& block : j.at("observation_model")) {
      auto u = block.at("u").get<ControlIndex>();
      for (const auto& e : block.at("entries")) {
        if (e.size() == 4) {
          b.add_branch_observation(u, e.at(0).get<StateIndex>(), e.at(1).get<StateIndex>(), e.at(2).get<ObservationIndex>(),
                                   e.at(3).get<double>());
        } else {
          b.add_observation(u, e.at(0).get<StateIndex>(), e.at(1).get<ObservationIndex>(), e.at(2).get<double>());
        }
      }
    }
    if (j.contains("cost")) {
      for (const auto& e : j.at("cost")) {
        b.set_cost(e.at(0).get<StateIndex>(), e.at(1).get<ControlIndex>(), e.at(2).get<StateIndex>(), e.at(3).get<double>());
      }
    }
    return b.build(renormalize);
  } catch (const json::exception& e) {
    throw InvalidModel(std::string("malformed problem file: ") + e.what());
  }
}

/// Serializes a model. Observations are written per successor when every
/// origin state agrees, otherwise per transition branch.
inline json problem_to_json(const TabularPomdp& m) {
  json j;
  j["n"] = m.state_count();
  j["controls"] = m.control_names();
  j["observations"] = m.observation_names();
  j["discount"] = m.discount();
  j["transitions"] = json::array();
  j["observation_model"] = json::array();
  j["cost"] = json::array();
  for (ControlIndex u = 0; u < m.control_count(); ++u) {
    json tr = json::array();
    std::map<StateIndex, std::map<ObservationIndex, double>> shared;
    std::map<std::pair<StateIndex, StateIndex>, std::map<ObservationIndex, double>> branch;
    bool consistent = true;
    for (StateIndex i = 0; i < m.state_count(); ++i) {
      std::map<StateIndex, std::map<ObservationIndex, double>> rows;
      for (const auto& o : m.outcomes(i, u)) rows[o.next][o.observation] += o.probability;
      for (auto& [jn, zs] : rows) {
        double p = 0.0;
        for (auto& [z, q] : zs) p += q;
        tr.push_back({i, jn, p});
        std::map<ObservationIndex, double> cond;
        for (auto& [z, q] : zs) cond[z] = q / p;
        branch[{i, jn}] = cond;
        auto [it, fresh] = shared.try_emplace(jn, cond);
        if (!fresh) {
          for (auto& [z, q] : cond) {
            if (std::abs(it->second[z] - q) > 1e-15) consistent = false;
          }
          if (it->second.size() != cond.size()) consistent = false;
        }
        for (const auto& o : m.outcomes(i, u)) {
          if (o.next == jn && o.cost != 0.0) {
            j["cost"].push_back({i, u, jn, o.cost});
            break;
          }
        }
      }
    }
    json om = json::array();
    if (consistent) {
      for (auto& [jn, zs] : shared) {
        for (auto& [z, q] : zs) om.push_back({jn, z, q});
      }
    } else {
      for (auto& [key, zs] : branch) {
        for (auto& [z, q] : zs) om.push_back({key.first, key.second, z, q});
      }
    }
    j["transitions"].push_back({{"u", u}, {"entries", tr}});
    j["observation_model"].push_back({{"u", u}, {"entries", om}});
  }
  return j;
}

// ---------------------------------------------------------------------------
// Feature-scheme files

inline FeatureScheme scheme_from_json(const json& j, std::size_t n) {
  try {
    std::vector<FeatureDefinition> f;
    for (const auto& fd : j.at("features")) {
      FeatureDefinition d;
      d.name = fd.value("name", "f" + std::to_string(f.size()));
      d.members = fd.at("members").get<std::vector<StateIndex>>();
      for (const auto& e : fd.at("disagg")) d.disagg.push_back({e.at(0).get<StateIndex>(), e.at(1).get<double>()});
      f.push_back(std::move(d));
    }
    std::vector<PhiEntry> phi;
    if (j.contains("phi")) {
      for (const auto& e : j.at("phi")) phi.push_back({e.at(0).get<StateIndex>(), e.at(1).get<FeatureIndex>(), e.at(2).get<double>()});
    }
    return FeatureScheme(n, std::move(f), phi);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed feature-scheme file: ") + e.what());
  }
}

inline json scheme_to_json(const FeatureScheme& s) {
  json j;
  j["features"] = json::array();
  for (const auto& f : s.features()) {
    json d = json::array();
    for (const auto& e : f.disagg) d.push_back({e.index, e.weight});
    j["features"].push_back({{"name", f.name}, {"members", f.members}, {"disagg", d}});
  }
  j["phi"] = json::array();
  for (StateIndex i = 0; i < s.state_count(); ++i) {
    for (const auto& e : s.phi(i)) j["phi"].push_back({i, e.index, e.weight});
  }
  return j;
}

// ---------------------------------------------------------------------------
// Beliefs: [[i, w], ...]

inline Belief belief_from_json(const json& j, std::size_t n) {
  std::vector<WeightedIndex> e;
  for (const auto& x : j) e.push_back({x.at(0).get<std::uint32_t>(), x.at(1).get<double>()});
  return Belief(n, std::move(e), true);
}

inline json belief_to_json(const Belief& b) {
  json j = json::array();
  for (const auto& e : b) j.push_back({e.index, e.weight});
  return j;
}

// ---------------------------------------------------------------------------
// Solution files

inline PsiMode psi_from_string(const std::string& s) {
  if (s == "nearest" || s == "hard") return PsiMode::hard;
  if (s == "convex") return PsiMode::convex;
  throw InvalidArgument("unknown psi mode '" + s + "'");
}

inline json solution_to_json(const AggregateValue& v) {
  json j;
  j["rho"] = v.rho;
  j["psi_mode"] = to_string(v.psi_mode);
  j["mode"] = to_string(v.mode);
  j["expansion"] = v.table.is_eager() ? "eager" : "lazy";
  j["features"] = v.table.feature_count();
  j["residual"] = v.residual;
  j["bellman_residual"] = v.bellman_residual;
  j["iterations"] = v.iterations;
  j["converged"] = v.converged;
  j["bias_tag"] = v.bias_tag.empty() ? json(nullptr) : json(v.bias_tag);
  json entries = json::array();
  for (std::size_t p = 0; p < v.values.size(); ++p) entries.push_back({v.table.key(p).dense(), v.values[p]});
  j["entries"] = std::move(entries);
  return j;
}

/// Rebuilds a solution; keys keep their file order in a lazy table.
inline AggregateValue solution_from_json(const json& j) {
  try {
    AggregateValue v;
    v.rho = j.at("rho").get<std::uint32_t>();
    v.psi_mode = psi_from_string(j.at("psi_mode").get<std::string>());
    v.mode = j.value("mode", "sync") == "async" ? SweepMode::async : SweepMode::sync;
    v.residual = j.at("residual").get<double>();
    v.bellman_residual = j.value("bellman_residual", 0.0);
    v.iterations = j.at("iterations").get<std::size_t>();
    v.converged = j.value("converged", true);
    v.bias_tag = j.at("bias_tag").is_null() ? "" : j.at("bias_tag").get<std::string>();
    const auto& entries = j.at("entries");
    if (entries.empty()) throw InvalidArgument("solution has no entries");
    std::size_t k = entries.at(0).at(0).size();
    v.table = RepresentativeTable::lazy(k, v.rho);
    for (const auto& e : entries) {
      auto d = e.at(0).get<std::vector<std::uint32_t>>();
      if (d.size() != k) throw InvalidArgument("solution entries have inconsistent dimension");
      auto [idx, fresh] = v.table.insert(GridPoint::from_dense(d, v.rho));
      if (!fresh) throw InvalidArgument("duplicate entry in solution file");
      v.values.push_back(e.at(1).get<double>());
    }
    return v;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed solution file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports

inline json bound_report_to_json(const BoundReport& r) {
  json j;
  j["epsilon_hat"] = r.epsilon_hat;
  j["bound"] = r.bound;
  j["max_violation_over"] = r.max_violation_over;
  j["max_violation_under"] = r.max_violation_under;
  j["sup_error"] = r.sup_error;
  j["samples"] = r.samples;
  j["seed"] = r.seed;
  j["slack"] = r.slack;
  j["bound_holds"] = r.bound_holds;
  j["lower_bound_checked"] = r.lower_bound_checked;
  j["lower_bound_holds"] = r.lower_bound_holds;
  j["hull_samples"] = r.hull_samples;
  j["misses"] = r.misses;
  json fs = json::array();
  for (const auto& f : r.footprint_stats) {
    fs.push_back({{"delta", f.point.dense()}, {"min", f.min}, {"max", f.max}, {"spread", f.max - f.min}, {"count", f.count}});
  }
  j["footprint_stats"] = std::move(fs);
  return j;
}

inline std::string trace_to_csv(const std::vector<TraceRow>& rows, const TabularPomdp& m) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "stage,observation,control,belief_entropy,discounted_cost\n";
  for (const auto& r : rows) {
    out << r.stage << ',' << m.observation_names()[r.observation] << ',' << m.control_names()[r.control] << ','
        << r.belief_entropy << ',' << r.discounted_cost << '\n';
  }
  return out.str();
}

}  // namespace fbagg::io
