// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "misfit/cli/charts.hpp"
#include "misfit/cli/commands.hpp"
#include "misfit/core/error.hpp"
#include "misfit/core/rng.hpp"
#include "misfit/core/tensor.hpp"
#include "misfit/data/dataset.hpp"
#include "misfit/data/image.hpp"
#include "misfit/data/image_io.hpp"
#include "misfit/data/misalign.hpp"
#include "misfit/data/resize.hpp"
#include "misfit/data/synthetic.hpp"
#include "misfit/losses/losses.hpp"
#include "misfit/metrics/metrics.hpp"
#include "misfit/nn/attention.hpp"
#include "misfit/nn/discriminator.hpp"
#include "misfit/nn/generator.hpp"
#include "misfit/nn/layers.hpp"
#include "misfit/train/ablation.hpp"
#include "misfit/train/adam.hpp"
#include "misfit/train/checkpoint.hpp"
#include "misfit/train/config.hpp"
#include "misfit/train/gan.hpp"
#include "misfit/train/gradcheck.hpp"
#include "misfit/train/trainer.hpp"
