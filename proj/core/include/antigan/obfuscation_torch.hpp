#pragma once

#include <torch/types.h>

#include "antigan/obfuscation.hpp"

namespace antigan::obf {

// Batch-mean of the per-image window-variance loss as a differentiable scalar.
// The backward pass uses the analytic gradient from l_obf, not autograd
// through the variance computation.
torch::Tensor batch_obfuscation_loss(const torch::Tensor& images,
                                     const WindowGrid& grid,
                                     const ObfuscationParams& params);

// Mean over images and windows of the window variance.
double batch_mean_window_variance(const torch::Tensor& images,
                                  const WindowGrid& grid);

}  // namespace antigan::obf
