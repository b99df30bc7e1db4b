#pragma once

// Everything except serialization (noisyor/io.hpp needs nlohmann/json).

#include "noisyor/error.hpp"
#include "noisyor/model.hpp"
#include "noisyor/exact.hpp"
#include "noisyor/rng.hpp"
#include "noisyor/dataset.hpp"
#include "noisyor/generator.hpp"
#include "noisyor/estimation.hpp"
#include "noisyor/causal_order.hpp"
#include "noisyor/learned_model.hpp"
#include "noisyor/id_learner.hpp"
#include "noisyor/simplex_ls.hpp"
#include "noisyor/ec_learner.hpp"
#include "noisyor/em_learner.hpp"
#include "noisyor/evaluation.hpp"
#include "noisyor/study.hpp"
