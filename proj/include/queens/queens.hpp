#pragma once

/// Umbrella header: the whole library in one include.

#include "queens/config.hpp"
#include "queens/design_matrix.hpp"
#include "queens/designs.hpp"
#include "queens/distributions.hpp"
#include "queens/driver.hpp"
#include "queens/errors.hpp"
#include "queens/gp.hpp"
#include "queens/inference.hpp"
#include "queens/log.hpp"
#include "queens/model.hpp"
#include "queens/optimize.hpp"
#include "queens/parameter_space.hpp"
#include "queens/random.hpp"
#include "queens/results.hpp"
#include "queens/scheduler.hpp"
#include "queens/sensitivity.hpp"
#include "queens/uq.hpp"
#include "queens/workflow.hpp"
