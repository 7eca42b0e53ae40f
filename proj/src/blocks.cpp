#include "corrseg/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace corrseg {

namespace {

Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(std * rng.normal());
    return t;
}

}  // namespace

Conv3dLayer make_conv(int c_in, int c_out, int k, int dilation, int stride, Rng& rng, bool has_bias) {
    Conv3dLayer layer;
    layer.weight = he_normal({c_out, c_in, k, k, k}, c_in * k * k * k, rng);
    layer.bias = Tensor::zeros({c_out});
    layer.dilation = dilation;
    layer.stride = stride;
    layer.has_bias = has_bias;
    return layer;
}

DenseLayer make_dense(int c_in, int c_out, Rng& rng) {
    DenseLayer layer;
    layer.weight = he_normal({c_out, c_in}, c_in, rng);
    layer.bias = Tensor::zeros({c_out});
    return layer;
}

ResDilBlock make_res_dil(int channels, float leaky_slope, Rng& rng) {
    ResDilBlock block;
    block.conv_a = make_conv(channels, channels, 3, 2, 1, rng, /*has_bias=*/false);  // feeds instance_norm
    block.conv_b = make_conv(channels, channels, 3, 4, 1, rng);
    block.leaky_slope = leaky_slope;
    return block;
}

Tensor res_dil_forward(const Tensor& x, const ResDilBlock& block) {
    if (x.shape().size() != 4 || x.shape()[0] != block.conv_a.weight.shape()[1]) {
        throw std::invalid_argument("res_dil_forward: input " + shape_str(x.shape()) + " does not match block channels " +
                                    std::to_string(block.conv_a.weight.shape()[1]));
    }
    Tensor h = leaky_relu(instance_norm(x, block.norm_eps), block.leaky_slope);
    h = block.conv_a.forward(h);
    h = leaky_relu(instance_norm(h, block.norm_eps), block.leaky_slope);
    h = block.conv_b.forward(h);
    return add(x, h);
}

MpeModule make_mpe(int channels, float leaky_slope, Rng& rng) {
    MpeModule mpe;
    mpe.fc1 = make_dense(channels, channels, rng);
    mpe.fc2 = make_dense(channels, 4 * channels, rng);
    mpe.leaky_slope = leaky_slope;
    return mpe;
}

Gamma mpe_forward(const Tensor& f_i, const MpeModule& mpe) {
    const int c = mpe.fc1.weight.shape()[1];
    if (f_i.shape().size() != 4 || f_i.shape()[0] != c) {
        throw std::invalid_argument("mpe_forward: input " + shape_str(f_i.shape()) + " does not match MPE width " +
                                    std::to_string(c));
    }
    Tensor pooled = global_avg_pool(f_i);
    Tensor hidden = leaky_relu(mpe.fc1.forward(pooled), mpe.leaky_slope);
    Tensor out = mpe.fc2.forward(hidden);  // [4C], split (alpha, beta, gamma, delta)
    Gamma g;
    g.alpha = slice_vec(out, 0, c);
    g.beta = slice_vec(out, c, c);
    g.gamma = slice_vec(out, 2 * c, c);
    g.delta = slice_vec(out, 3 * c, c);
    return g;
}

Tensor lce_forward(const Gamma& g, const Tensor& f_j, const Tensor& f_k, const Tensor& f_m) {
    if (f_j.shape() != f_k.shape() || f_j.shape() != f_m.shape()) {
        throw std::invalid_argument("lce_forward: feature shapes differ: " + shape_str(f_j.shape()) + ", " +
                                    shape_str(f_k.shape()) + ", " + shape_str(f_m.shape()));
    }
    if (g.alpha.shape().size() != 1 || g.alpha.shape()[0] != f_j.shape()[0]) {
        throw std::invalid_argument("lce_forward: Gamma length " + shape_str(g.alpha.shape()) +
                                    " does not match feature channels " + shape_str(f_j.shape()));
    }
    Tensor acc = add(mul(f_j, g.alpha), mul(f_k, g.beta));
    acc = add(acc, mul(f_m, g.gamma));
    return add(acc, g.delta);
}

ChannelAttention make_channel_attention(int channels_4c, float leaky_slope, Rng& rng) {
    if (channels_4c % 4 != 0) {
        throw std::invalid_argument("channel attention: channel count must be divisible by 4, got " +
                                    std::to_string(channels_4c));
    }
    ChannelAttention att;
    att.fc1 = make_dense(channels_4c, channels_4c / 4, rng);
    att.fc2 = make_dense(channels_4c / 4, channels_4c, rng);
    att.leaky_slope = leaky_slope;
    return att;
}

Tensor channel_attention_forward(const Tensor& fused_input, const ChannelAttention& att) {
    if (fused_input.shape()[0] % 4 != 0) {
        throw std::invalid_argument("channel_attention: channel count must be divisible by 4, got " +
                                    shape_str(fused_input.shape()));
    }
    Tensor pooled = global_avg_pool(fused_input);
    Tensor hidden = leaky_relu(att.fc1.forward(pooled), att.leaky_slope);
    return sigmoid(att.fc2.forward(hidden));
}

SpatialAttention make_spatial_attention(Rng& rng) {
    SpatialAttention att;
    att.conv = make_conv(2, 1, 3, 1, 1, rng);
    return att;
}

Tensor spatial_attention_forward(const Tensor& fused_input, const SpatialAttention& att) {
    Tensor squeezed = concat_channels({channel_mean(fused_input), channel_max(fused_input)});
    return sigmoid(att.conv.forward(squeezed));
}

Tensor fuse(const Tensor& fused_input, const Tensor& channel_w, const Tensor& spatial_w) {
    Tensor f_c = mul(fused_input, channel_w);
    Tensor f_s = mul(fused_input, spatial_w);
    return add(f_c, f_s);
}

}  // namespace corrseg
