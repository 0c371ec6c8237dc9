#pragma once

// Umbrella header.

#include "sardiff/checkpoint.hpp"
#include "sardiff/data.hpp"
#include "sardiff/diffusion.hpp"
#include "sardiff/extractor.hpp"
#include "sardiff/image_io.hpp"
#include "sardiff/metrics.hpp"
#include "sardiff/nn.hpp"
#include "sardiff/rng.hpp"
#include "sardiff/schedule.hpp"
#include "sardiff/tensor.hpp"
#include "sardiff/tensor_io.hpp"
#include "sardiff/train.hpp"
#include "sardiff/unet.hpp"
