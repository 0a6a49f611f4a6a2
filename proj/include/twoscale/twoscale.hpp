#pragma once

#include "errors.hpp"
#include "markov_models.hpp"
#include "problems.hpp"
#include "random.hpp"
#include "report.hpp"
#include "schedules.hpp"
#include "simulator.hpp"
#include "stochastic_linalg.hpp"
#include "theory.hpp"
#include "transform.hpp"
#include "experiments.hpp"
