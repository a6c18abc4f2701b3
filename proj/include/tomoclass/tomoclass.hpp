#pragma once

#include "cube_io.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "features.hpp"
#include "geosplit.hpp"
#include "heightstats.hpp"
#include "hpo.hpp"
#include "learners/autotune.hpp"
#include "learners/ensemble.hpp"
#include "learners/model.hpp"
#include "learners/params.hpp"
#include "learners/train.hpp"
#include "learners/tree.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "synth.hpp"

namespace tomoclass {

inline constexpr char const* version = "0.1.0";

}  // namespace tomoclass
