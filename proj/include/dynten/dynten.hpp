#pragma once

#include "dynten/analysis.hpp"
#include "dynten/autodiff.hpp"
#include "dynten/backend.hpp"
#include "dynten/checkpoint.hpp"
#include "dynten/core.hpp"
#include "dynten/data.hpp"
#include "dynten/graph.hpp"
#include "dynten/model.hpp"
#include "dynten/nn.hpp"
#include "dynten/ode.hpp"
#include "dynten/rng.hpp"
#include "dynten/synth.hpp"
#include "dynten/train.hpp"
