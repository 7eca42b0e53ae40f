#pragma once

#include <vector>

#include "corrseg/tape.hpp"
#include "corrseg/tensor.hpp"

namespace corrseg {

enum class Activation { Relu, LeakyRelu, Sigmoid };
enum class Elementwise { Add, Mul };

// 3x3x3 (or 1x1x1) cross-correlation with zero "same" padding.
// input  [C_in, D, H, W], weight [C_out, C_in, k, k, k], bias [C_out].
// stride 1 preserves spatial dims; stride s yields ceil(dim / s).
// dilation must be 1, 2 or 4; k must be odd.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int dilation = 1, int stride = 1);

// Nearest-neighbor replication by an integer factor per spatial dim.
// Backward sums the gradient over each replicated block.
Tensor upsample3d(const Tensor& input, int factor);

// weight [C_out, C_in] * input [C_in] + bias [C_out].
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor activation(const Tensor& input, Activation kind, float slope = 0.01f);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, float slope = 0.01f);
Tensor sigmoid(const Tensor& x);

// a and b with equal shapes, or b broadcast against a [C,D,H,W] either as a
// per-channel vector [C] or as a per-voxel map [1,D,H,W]. The gradient of a
// broadcast operand is reduced over the replicated axes.
Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise kind);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// x * c for a constant c (not a tensor, not differentiated).
Tensor scale(const Tensor& x, double c);

// Channel-axis concatenation of [C_i, D, H, W] maps with equal spatial dims.
Tensor concat_channels(const std::vector<Tensor>& inputs);

// [C, D, H, W] -> [C]: per-channel mean over all voxels.
Tensor global_avg_pool(const Tensor& input);

// Per-channel zero-mean unit-variance over spatial dims, no learned affine.
Tensor instance_norm(const Tensor& input, float eps = 1e-5f);

// [C, D, H, W] -> [1, D, H, W] per-voxel reductions over channels.
// channel_max routes the gradient to the first max index on ties.
Tensor channel_mean(const Tensor& input);
Tensor channel_max(const Tensor& input);

// Rank-1 slice x[offset : offset+len]; backward scatters into the segment.
Tensor slice_vec(const Tensor& x, int offset, int len);

// Sum over all elements -> scalar [1].
Tensor reduce_sum(const Tensor& x);

}  // namespace corrseg
