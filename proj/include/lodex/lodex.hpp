#pragma once

// Single entry point for the whole library.

#include "lodex/channel.hpp"
#include "lodex/config.hpp"
#include "lodex/graph.hpp"
#include "lodex/io.hpp"
#include "lodex/net.hpp"
#include "lodex/odeint.hpp"
#include "lodex/rng.hpp"
#include "lodex/sweep.hpp"
#include "lodex/tensor.hpp"
#include "lodex/threadpool.hpp"
#include "lodex/training.hpp"
#include "lodex/version.hpp"
