#pragma once

#include "fbagg/distribution.hpp"
#include "fbagg/errors.hpp"
#include "fbagg/features.hpp"
#include "fbagg/grid.hpp"
#include "fbagg/policy_eval.hpp"
#include "fbagg/pomdp.hpp"
#include "fbagg/problems/particle_filter.hpp"
#include "fbagg/problems/rocksample.hpp"
#include "fbagg/problems/treasure.hpp"
#include "fbagg/random.hpp"
#include "fbagg/rollout.hpp"
#include "fbagg/solver.hpp"
