#pragma once

#include "lto/core.hpp"
#include "lto/image.hpp"
#include "lto/dataset.hpp"
#include "lto/embedding.hpp"
#include "lto/dynamics.hpp"
#include "lto/agent.hpp"
#include "lto/exploration.hpp"
#include "lto/envs/env.hpp"
#include "lto/envs/peg2d.hpp"
#include "lto/envs/runner.hpp"
#include "lto/envs/demonstrations.hpp"
#include "lto/harness/config.hpp"
#include "lto/harness/metrics.hpp"
#include "lto/harness/stats.hpp"
#include "lto/harness/experiment.hpp"
#include "lto/harness/report.hpp"
