#pragma once

#include "lmapprox/approximator.hpp"
#include "lmapprox/bridge.hpp"
#include "lmapprox/core.hpp"
#include "lmapprox/corpus.hpp"
#include "lmapprox/errors.hpp"
#include "lmapprox/generator_spec.hpp"
#include "lmapprox/generators.hpp"
#include "lmapprox/metrics.hpp"
#include "lmapprox/planner.hpp"
#include "lmapprox/seeding.hpp"
