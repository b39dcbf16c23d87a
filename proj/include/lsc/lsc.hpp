#pragma once

#include "lsc/commands.hpp"
#include "lsc/dataset.hpp"
#include "lsc/embedding.hpp"
#include "lsc/error.hpp"
#include "lsc/objective.hpp"
#include "lsc/probe.hpp"
#include "lsc/report.hpp"
#include "lsc/rng.hpp"
#include "lsc/stats.hpp"
#include "lsc/synth.hpp"
#include "lsc/tensor_file.hpp"
