#pragma once

#include <vector>

#include "corrseg/ops.hpp"

namespace corrseg {

// Soft Dice over region channels: mean_r of
//   1 - (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps).
// labels are treated as constants; the gradient flows to probs.
Tensor soft_dice_loss(const Tensor& probs, const Tensor& labels, float eps = 1e-5f);

// Mean absolute difference; the gradient flows to both operands.
Tensor l1_mean(const Tensor& a, const Tensor& b);

// Mean over modalities and elements of |cr[i] - enc[i]|.
Tensor correlation_l1_loss(const std::vector<Tensor>& cr_features, const std::vector<Tensor>& encoder_features);

}  // namespace corrseg
