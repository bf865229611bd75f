#pragma once

// Umbrella header for the pansharpening toolkit.

#include "pansharp/autodiff.hpp"
#include "pansharp/baselines.hpp"
#include "pansharp/box_filter.hpp"
#include "pansharp/checkpoint.hpp"
#include "pansharp/config.hpp"
#include "pansharp/dataset.hpp"
#include "pansharp/guided_filter.hpp"
#include "pansharp/image_io.hpp"
#include "pansharp/metrics.hpp"
#include "pansharp/network.hpp"
#include "pansharp/nn.hpp"
#include "pansharp/resample.hpp"
#include "pansharp/synth.hpp"
#include "pansharp/train.hpp"
#include "pansharp/types.hpp"
