#pragma once

#include "dnl/commands.hpp"
#include "dnl/common.hpp"
#include "dnl/config.hpp"
#include "dnl/data.hpp"
#include "dnl/io.hpp"
#include "dnl/losses.hpp"
#include "dnl/metrics.hpp"
#include "dnl/nn.hpp"
#include "dnl/ops.hpp"
#include "dnl/optim.hpp"
#include "dnl/tensor.hpp"
#include "dnl/trainers.hpp"
