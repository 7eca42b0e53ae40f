#pragma once

#include "corrseg/ops.hpp"
#include "corrseg/rng.hpp"
#include "corrseg/tensor.hpp"

namespace corrseg {

struct Conv3dLayer {
    Tensor weight;  // [C_out, C_in, k, k, k]
    Tensor bias;    // [C_out]; stays zero and out of the parameter set when has_bias is false
    int dilation = 1;
    int stride = 1;
    bool has_bias = true;

    Tensor forward(const Tensor& x) const { return conv3d(x, weight, bias, dilation, stride); }
};

struct DenseLayer {
    Tensor weight;  // [C_out, C_in]
    Tensor bias;    // [C_out]

    Tensor forward(const Tensor& x) const { return dense(x, weight, bias); }
};

// He-scaled normal weights (std = sqrt(2 / fan_in)), zero biases. Convs that
// feed instance_norm carry no bias parameter: the norm cancels per-channel
// shifts, so such a bias would have an identically zero gradient.
Conv3dLayer make_conv(int c_in, int c_out, int k, int dilation, int stride, Rng& rng, bool has_bias = true);
DenseLayer make_dense(int c_in, int c_out, Rng& rng);

// Per-channel coefficients of the linear correlation expression; one set per
// modality, produced by that modality's MPE.
struct Gamma {
    Tensor alpha, beta, gamma, delta;  // each [C]
};

// Residual block with dilated convolutions at rates 2 and 4.
struct ResDilBlock {
    Conv3dLayer conv_a;  // dilation 2
    Conv3dLayer conv_b;  // dilation 4
    float leaky_slope = 0.01f;
    float norm_eps = 1e-5f;
};
ResDilBlock make_res_dil(int channels, float leaky_slope, Rng& rng);

// x + conv_b(act(norm(conv_a(act(norm(x)))))), shape preserving.
Tensor res_dil_forward(const Tensor& x, const ResDilBlock& block);

// Two fully connected layers with LeakyReLU mapping the pooled bottleneck
// features of one modality to its Gamma coefficients.
struct MpeModule {
    DenseLayer fc1;  // C -> C
    DenseLayer fc2;  // C -> 4C
    float leaky_slope = 0.01f;
};
MpeModule make_mpe(int channels, float leaky_slope, Rng& rng);
Gamma mpe_forward(const Tensor& f_i, const MpeModule& mpe);

// F_i = alpha (.) f_j + beta (.) f_k + gamma (.) f_m + delta, coefficients
// broadcast per channel over the spatial dims.
Tensor lce_forward(const Gamma& g, const Tensor& f_j, const Tensor& f_k, const Tensor& f_m);

// Squeeze-style channel (modality) attention: 4C -> C -> 4C with sigmoid.
struct ChannelAttention {
    DenseLayer fc1;
    DenseLayer fc2;
    float leaky_slope = 0.01f;
};
ChannelAttention make_channel_attention(int channels_4c, float leaky_slope, Rng& rng);
Tensor channel_attention_forward(const Tensor& fused_input, const ChannelAttention& att);

// Spatial attention: [channel-mean, channel-max] squeezed by one 3^3 conv.
struct SpatialAttention {
    Conv3dLayer conv;  // 2 -> 1
};
SpatialAttention make_spatial_attention(Rng& rng);
Tensor spatial_attention_forward(const Tensor& fused_input, const SpatialAttention& att);

// F_f = F (.) channel_w + F (.) spatial_w.
Tensor fuse(const Tensor& fused_input, const Tensor& channel_w, const Tensor& spatial_w);

}  // namespace corrseg
