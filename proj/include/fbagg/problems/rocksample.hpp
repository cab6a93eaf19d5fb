#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "fbagg/features.hpp"
#include "fbagg/pomdp.hpp"

namespace fbagg {

struct Cell {
  int x;
  int y;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Rover on a size×size grid with k rocks of unknown quality. State index
/// is (y·size + x)·2^k + mask; bit r of mask set means rock r is good. The
/// final state is the terminal state reached by leaving the grid eastward.
struct RockSampleSpec {
  int size = 4;
  std::vector<Cell> rocks;
  Cell start{0, 2};
  double half_efficiency = 20.0;  // sensor efficiency is 2^(−d/half_efficiency)
  double exit_reward = 10.0;
  double good_sample_reward = 10.0;
  double bad_sample_reward = -10.0;
  double empty_sample_reward = -10.0;
  double move_cost = 0.0;
  double sense_cost = 0.0;
  double discount = 0.95;

  /// Fixed layouts for the preset sizes; other sizes place rocks by a
  /// deterministic stride over the grid cells.
  static RockSampleSpec standard(int size, int k) {
    RockSampleSpec s;
    s.size = size;
    s.start = {0, size / 2};
    if (size == 4 && k == 4) {
      s.rocks = {{3, 1}, {2, 1}, {1, 3}, {1, 0}};
    } else if (size == 5 && k == 5) {
      s.rocks = {{2, 4}, {0, 4}, {3, 3}, {2, 2}, {4, 1}};
    } else if (size == 5 && k == 7) {
      s.rocks = {{1, 0}, {2, 1}, {1, 2}, {2, 2}, {4, 2}, {0, 3}, {3, 4}};
    } else if (size == 7 && k == 8) {
      s.rocks = {{2, 0}, {0, 1}, {3, 1}, {6, 3}, {2, 4}, {3, 4}, {5, 5}, {1, 6}};
    } else {
      int cells = size * size;
      for (int t = 0, c = 1; static_cast<int>(s.rocks.size()) < k && t < 4 * cells; ++t, c = (c + 7) % cells) {
        Cell p{c % size, c / size};
        if (p == s.start || std::find(s.rocks.begin(), s.rocks.end(), p) != s.rocks.end()) continue;
        s.rocks.push_back(p);
      }
    }
    return s;
  }

  void validate() const {
    if (size < 1) throw InvalidArgument("grid size must be positive");
    if (rocks.size() > 16) throw InvalidArgument("at most 16 rocks are supported");
    auto inside = [&](Cell c) { return c.x >= 0 && c.y >= 0 && c.x < size && c.y < size; };
    if (!inside(start)) throw InvalidArgument("start position outside the grid");
    for (std::size_t r = 0; r < rocks.size(); ++r) {
      if (!inside(rocks[r])) throw InvalidArgument("rock position outside the grid");
      for (std::size_t q = 0; q < r; ++q) {
        if (rocks[q] == rocks[r]) throw InvalidArgument("two rocks share a cell");
      }
    }
    if (!(half_efficiency > 0.0)) throw InvalidArgument("half-efficiency distance must be positive");
    if (!(discount > 0.0 && discount < 1.0)) throw InvalidArgument("discount must lie in (0,1)");
    std::size_t n = state_count();
    if (n > 100000) throw InvalidArgument("RockSample instance too large to enumerate");
  }

  std::size_t rock_count() const { return rocks.size(); }
  std::size_t masks() const { return std::size_t{1} << rocks.size(); }
  std::size_t state_count() const { return static_cast<std::size_t>(size * size) * masks() + 1; }
  StateIndex terminal() const { return static_cast<StateIndex>(state_count() - 1); }
  StateIndex state(Cell p, std::size_t mask) const {
    return static_cast<StateIndex>(static_cast<std::size_t>(p.y * size + p.x) * masks() + mask);
  }
};

enum RockSampleControl : ControlIndex { kNorth = 0, kSouth = 1, kEast = 2, kWest = 3, kSample = 4, kFirstCheck = 5 };
inline constexpr ObservationIndex kRockGood = 0;
inline constexpr ObservationIndex kRockBad = 1;

/// Moves are deterministic and blocked at the north, south and west borders;
/// moving east from the last column terminates with the exit reward. Moves
/// and sampling always emit observation "good"; checks report the rock's
/// quality correctly with probability (1 + 2^(−d/d0))/2.
inline TabularPomdp build_rocksample(const RockSampleSpec& s) {
  s.validate();
  std::vector<std::string> controls = {"north", "south", "east", "west", "sample"};
  for (std::size_t r = 0; r < s.rock_count(); ++r) controls.push_back("check-" + std::to_string(r + 1));
  const std::size_t n = s.state_count();
  const StateIndex t = s.terminal();
  PomdpBuilder b(n, controls, {"good", "bad"}, s.discount);
  for (int y = 0; y < s.size; ++y) {
    for (int x = 0; x < s.size; ++x) {
      for (std::size_t mask = 0; mask < s.masks(); ++mask) {
        const StateIndex i = s.state({x, y}, mask);
        const Cell moves[4] = {{x, std::min(y + 1, s.size - 1)}, {x, std::max(y - 1, 0)}, {x + 1, y}, {std::max(x - 1, 0), y}};
        for (ControlIndex u = 0; u < 4; ++u) {
          StateIndex j = (moves[u].x >= s.size) ? t : s.state(moves[u], mask);
          b.add_transition(u, i, j, 1.0);
          b.set_cost(i, u, j, j == t ? -s.exit_reward + s.move_cost : s.move_cost);
        }
        auto rock = std::find(s.rocks.begin(), s.rocks.end(), Cell{x, y});
        if (rock == s.rocks.end()) {
          b.add_transition(kSample, i, i, 1.0);
          b.set_cost(i, kSample, i, -s.empty_sample_reward);
        } else {
          std::size_t bit = std::size_t{1} << (rock - s.rocks.begin());
          StateIndex j = s.state({x, y}, mask & ~bit);
          b.add_transition(kSample, i, j, 1.0);
          b.set_cost(i, kSample, j, (mask & bit) ? -s.good_sample_reward : -s.bad_sample_reward);
        }
        for (std::size_t r = 0; r < s.rock_count(); ++r) {
          ControlIndex u = kFirstCheck + r;
          b.add_transition(u, i, i, 1.0);
          b.set_cost(i, u, i, s.sense_cost);
          double d = std::hypot(static_cast<double>(x - s.rocks[r].x), static_cast<double>(y - s.rocks[r].y));
          double correct = 0.5 * (1.0 + std::exp2(-d / s.half_efficiency));
          bool good = mask >> r & 1u;
          b.add_observation(u, i, kRockGood, good ? correct : 1.0 - correct);
          b.add_observation(u, i, kRockBad, good ? 1.0 - correct : correct);
        }
        for (ControlIndex u = 0; u < kFirstCheck; ++u) b.add_observation(u, i, kRockGood, 1.0);
      }
    }
  }
  for (ControlIndex u = 0; u < controls.size(); ++u) {
    b.add_transition(u, t, t, 1.0);
    b.add_observation(u, t, kRockGood, 1.0);
  }
  return b.build();
}

/// Rover at the start cell, rocks independently good with probability 1/2.
inline Belief rocksample_initial_belief(const RockSampleSpec& s) {
  std::vector<StateIndex> support;
  for (std::size_t mask = 0; mask < s.masks(); ++mask) support.push_back(s.state(s.start, mask));
  return Belief::uniform(s.state_count(), support);
}

enum class RockSampleFeatureMode { identity, grid3x3 };

/// identity: 𝓕 = X. grid3x3: (cell of a 3×3 partition of the grid, rock
/// mask) with a separate terminal feature; disaggregation uniform in cells.
inline FeatureScheme rs_feature_scheme(const RockSampleSpec& s, RockSampleFeatureMode mode) {
  s.validate();
  if (mode == RockSampleFeatureMode::identity) return identity_scheme(s.state_count());
  std::vector<FeatureDefinition> f;
  for (int cell = 0; cell < 9; ++cell) {
    for (std::size_t mask = 0; mask < s.masks(); ++mask) {
      f.push_back({"cell" + std::to_string(cell) + "-rocks" + std::to_string(mask), {}, {}});
    }
  }
  for (int y = 0; y < s.size; ++y) {
    for (int x = 0; x < s.size; ++x) {
      int cell = (y * 3 / s.size) * 3 + (x * 3 / s.size);
      for (std::size_t mask = 0; mask < s.masks(); ++mask) f[cell * s.masks() + mask].members.push_back(s.state({x, y}, mask));
    }
  }
  std::erase_if(f, [](const FeatureDefinition& d) { return d.members.empty(); });
  f.push_back({"terminal", {s.terminal()}, {}});
  for (auto& fd : f) {
    for (auto i : fd.members) fd.disagg.push_back({i, 1.0 / static_cast<double>(fd.members.size())});
  }
  return FeatureScheme(s.state_count(), std::move(f));
}

}  // namespace fbagg
