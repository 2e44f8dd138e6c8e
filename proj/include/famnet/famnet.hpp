#pragma once

// Umbrella header for the famnet library.

#include "famnet/attention.hpp"
#include "famnet/backbone.hpp"
#include "famnet/checkpoint.hpp"
#include "famnet/config.hpp"
#include "famnet/image.hpp"
#include "famnet/layers.hpp"
#include "famnet/losses.hpp"
#include "famnet/manifest.hpp"
#include "famnet/metrics.hpp"
#include "famnet/model.hpp"
#include "famnet/ops.hpp"
#include "famnet/optimizer.hpp"
#include "famnet/preprocess.hpp"
#include "famnet/rng.hpp"
#include "famnet/synthetic.hpp"
#include "famnet/tape.hpp"
#include "famnet/tensor.hpp"
#include "famnet/trainer.hpp"
