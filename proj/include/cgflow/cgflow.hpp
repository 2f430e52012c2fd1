#pragma once

// Umbrella header for the whole engine.

#include "cgflow/adamw.hpp"
#include "cgflow/counterfactual.hpp"
#include "cgflow/dag.hpp"
#include "cgflow/dataset.hpp"
#include "cgflow/effects.hpp"
#include "cgflow/errors.hpp"
#include "cgflow/expr.hpp"
#include "cgflow/fixtures.hpp"
#include "cgflow/flow.hpp"
#include "cgflow/mlp.hpp"
#include "cgflow/pipeline.hpp"
#include "cgflow/quadrature.hpp"
#include "cgflow/report.hpp"
#include "cgflow/rng.hpp"
#include "cgflow/synth.hpp"
#include "cgflow/tape.hpp"
#include "cgflow/tensor.hpp"
#include "cgflow/trainer.hpp"
