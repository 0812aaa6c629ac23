#pragma once

#include "highway/algorithms.hpp"
#include "highway/baselines.hpp"
#include "highway/envs.hpp"
#include "highway/harness.hpp"
#include "highway/mdp.hpp"
#include "highway/mdp_io.hpp"
#include "highway/operators.hpp"
#include "highway/properties.hpp"
#include "highway/rng.hpp"
