#pragma once

#include "amc/types.hpp"
#include "amc/linalg.hpp"
#include "amc/smg.hpp"
#include "amc/coherence.hpp"
#include "amc/entropy_design.hpp"
#include "amc/stiefel.hpp"
#include "amc/quadrant_law.hpp"
#include "amc/nuclear.hpp"
#include "amc/gibbs.hpp"
#include "amc/checkpoint.hpp"
#include "amc/maxent.hpp"
#include "amc/harness.hpp"
