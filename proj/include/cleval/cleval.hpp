#pragma once

#include "config.hpp"
#include "dataset.hpp"
#include "experiment.hpp"
#include "harness.hpp"
#include "idx.hpp"
#include "learner.hpp"
#include "metrics.hpp"
#include "scenario.hpp"
#include "serialize.hpp"
#include "strategy.hpp"
