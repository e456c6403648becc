#pragma once

#include "mtkd/agent.hpp"
#include "mtkd/checkpoint.hpp"
#include "mtkd/config.hpp"
#include "mtkd/data.hpp"
#include "mtkd/distill.hpp"
#include "mtkd/errors.hpp"
#include "mtkd/matrix.hpp"
#include "mtkd/net.hpp"
#include "mtkd/report.hpp"
#include "mtkd/rl.hpp"
#include "mtkd/rng.hpp"
#include "mtkd/state.hpp"
#include "mtkd/trainer.hpp"
#include "mtkd/weights.hpp"
