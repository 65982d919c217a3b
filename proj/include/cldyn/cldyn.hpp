#pragma once

// Umbrella header for the continual multi-modal dynamics learning library.

#include "cldyn/core/adam.hpp"
#include "cldyn/core/gaussian.hpp"
#include "cldyn/core/nn.hpp"
#include "cldyn/core/rng.hpp"
#include "cldyn/core/tensor.hpp"
#include "cldyn/data/dataset_io.hpp"
#include "cldyn/data/ode.hpp"
#include "cldyn/data/synthetic.hpp"
#include "cldyn/data/types.hpp"
#include "cldyn/data/uci.hpp"
#include "cldyn/model/cddp.hpp"
#include "cldyn/model/checkpoint.hpp"
#include "cldyn/model/memory.hpp"
#include "cldyn/model/ssm.hpp"
#include "cldyn/metrics/metrics.hpp"
#include "cldyn/continual/training.hpp"
#include "cldyn/continual/variants.hpp"
#include "cldyn/harness/config.hpp"
#include "cldyn/harness/experiment.hpp"
#include "cldyn/harness/report.hpp"
#include "cldyn/harness/results.hpp"
