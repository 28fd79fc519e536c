#pragma once

// Umbrella header.

#include "mmmc/analysis.hpp"
#include "mmmc/config.hpp"
#include "mmmc/csv.hpp"
#include "mmmc/error.hpp"
#include "mmmc/experiments.hpp"
#include "mmmc/extrapolation.hpp"
#include "mmmc/matching.hpp"
#include "mmmc/orchestrator.hpp"
#include "mmmc/reduce.hpp"
#include "mmmc/restriction.hpp"
#include "mmmc/rng.hpp"
#include "mmmc/sde.hpp"
