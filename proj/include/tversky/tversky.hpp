#pragma once

#include "tversky/adam.hpp"
#include "tversky/binary_io.hpp"
#include "tversky/data.hpp"
#include "tversky/error.hpp"
#include "tversky/gradcheck.hpp"
#include "tversky/harness.hpp"
#include "tversky/loss.hpp"
#include "tversky/metrics.hpp"
#include "tversky/nn.hpp"
#include "tversky/reference_plan.hpp"
#include "tversky/tensor.hpp"
#include "tversky/unet.hpp"
