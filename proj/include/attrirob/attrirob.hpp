#pragma once

// Convenience umbrella. Individual headers stay usable on their own.

#include "attrirob/attacks.hpp"
#include "attrirob/attribution.hpp"
#include "attrirob/consistency.hpp"
#include "attrirob/dataset.hpp"
#include "attrirob/errors.hpp"
#include "attrirob/harness.hpp"
#include "attrirob/io.hpp"
#include "attrirob/losses.hpp"
#include "attrirob/metrics.hpp"
#include "attrirob/mlp.hpp"
#include "attrirob/rng.hpp"
#include "attrirob/tensor.hpp"
#include "attrirob/theoremlab.hpp"
#include "attrirob/threads.hpp"
#include "attrirob/training.hpp"
