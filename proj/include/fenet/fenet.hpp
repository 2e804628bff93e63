#pragma once

// Umbrella header for the whole library.

#include "fenet/backbones.hpp"
#include "fenet/bench.hpp"
#include "fenet/checkpoint.hpp"
#include "fenet/config.hpp"
#include "fenet/data.hpp"
#include "fenet/ensemble.hpp"
#include "fenet/errors.hpp"
#include "fenet/fent_io.hpp"
#include "fenet/fusion.hpp"
#include "fenet/gradcheck.hpp"
#include "fenet/gradcheck_suite.hpp"
#include "fenet/model.hpp"
#include "fenet/ops.hpp"
#include "fenet/optim.hpp"
#include "fenet/params.hpp"
#include "fenet/parallel.hpp"
#include "fenet/registry.hpp"
#include "fenet/rng.hpp"
#include "fenet/tensor.hpp"
#include "fenet/temporal.hpp"
#include "fenet/train.hpp"
