#pragma once

#include "safestab/analysis.hpp"
#include "safestab/class_k.hpp"
#include "safestab/controllers.hpp"
#include "safestab/core.hpp"
#include "safestab/polynomial.hpp"
#include "safestab/qp_oracle.hpp"
#include "safestab/sampling.hpp"
#include "safestab/simulation.hpp"
#include "safestab/systems.hpp"
