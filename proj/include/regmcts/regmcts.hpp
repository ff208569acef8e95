#pragma once

#include "regmcts/agent.hpp"
#include "regmcts/config.hpp"
#include "regmcts/csv.hpp"
#include "regmcts/envs.hpp"
#include "regmcts/experiments.hpp"
#include "regmcts/parallel.hpp"
#include "regmcts/rng.hpp"
#include "regmcts/simplex.hpp"
#include "regmcts/solver.hpp"
#include "regmcts/tree.hpp"
