#include "corrseg/gradcheck_suite.hpp"

#include <algorithm>

#include "corrseg/blocks.hpp"
#include "corrseg/losses.hpp"
#include "corrseg/network.hpp"
#include "corrseg/rng.hpp"

namespace corrseg {

namespace {

Tensor rand_uniform(std::vector<int> shape, uint64_t seed, double lo, double hi) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

Tensor rand_labels(std::vector<int> shape, uint64_t seed, double p) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform() < p ? 1.0f : 0.0f;
    return t;
}

}  // namespace

std::vector<OpCheck> run_gradcheck_suite(uint64_t seed) {
    std::vector<OpCheck> checks;
    auto push = [&](const std::string& name, double err, double tol) {
        checks.push_back(OpCheck{name, err, tol});
    };
    auto sub = [&](uint64_t salt) { return hash_combine(seed, salt); };

    // conv3d: positive data keeps the linear-readout gradients away from
    // cancellation; h matches the documented 1e-3 step.
    {
        Tensor in = rand_uniform({2, 4, 4, 4}, sub(1), 0.1, 1.1);
        Tensor w = rand_uniform({2, 2, 3, 3, 3}, sub(2), 0.05, 0.55);
        Tensor b = rand_uniform({2}, sub(3), -1.0, 1.0);
        for (int dilation : {1, 2, 4}) {
            auto fw = [&](const Tensor& t) { return reduce_sum(conv3d(in, t, b, dilation)); };
            push("conv3d.d" + std::to_string(dilation) + ".weight", gradcheck(fw, w, 1e-3), 1e-3);
            auto fi = [&](const Tensor& t) { return reduce_sum(conv3d(t, w, b, dilation)); };
            push("conv3d.d" + std::to_string(dilation) + ".input", gradcheck(fi, in, 1e-3), 1e-3);
        }
        auto fb = [&](const Tensor& t) { return reduce_sum(conv3d(in, w, t, 1, 2)); };
        push("conv3d.s2.bias", gradcheck(fb, b, 1e-3), 1e-3);
        // the readout is linear in the input, so a wide step has no
        // curvature error and sits far above the rounding floor
        auto fs = [&](const Tensor& t) { return reduce_sum(conv3d(t, w, b, 1, 2)); };
        push("conv3d.s2.input", gradcheck(fs, in, 5e-2), 1e-3);
    }
    {
        Tensor x = rand_uniform({2, 3, 2, 3}, sub(4), -1.0, 1.0);
        auto f = [](const Tensor& t) { return reduce_sum(sigmoid(upsample3d(t, 2))); };
        push("upsample3d", gradcheck(f, x, 1e-2), 1e-3);
    }
    {
        Tensor xin = rand_uniform({4}, sub(5), -1.0, 1.0);
        Tensor w = rand_uniform({3, 4}, sub(6), -1.0, 1.0);
        Tensor b = rand_uniform({3}, sub(7), -1.0, 1.0);
        auto fw = [&](const Tensor& t) { return reduce_sum(sigmoid(dense(xin, t, b))); };
        push("dense.weight", gradcheck(fw, w, 1e-2), 1e-3);
        auto fx = [&](const Tensor& t) { return reduce_sum(sigmoid(dense(t, w, b))); };
        push("dense.input", gradcheck(fx, xin, 1e-2), 1e-3);
    }
    {
        Tensor x = rand_uniform({40}, sub(8), 0.1, 1.2);
        for (int64_t i = 0; i < x.numel(); i += 2) x.data()[i] = -x.data()[i];
        auto fr = [](const Tensor& t) { return reduce_sum(relu(t)); };
        push("activation.relu", gradcheck(fr, x, 1e-4), 1e-3);
        auto fl = [](const Tensor& t) { return reduce_sum(leaky_relu(t, 0.01f)); };
        push("activation.leaky_relu", gradcheck(fl, x, 1e-4), 1e-3);
        auto fs = [](const Tensor& t) { return reduce_sum(sigmoid(t)); };
        push("activation.sigmoid", gradcheck(fs, x, 1e-3), 1e-3);
    }
    {
        Tensor a = rand_uniform({3, 2, 2, 2}, sub(9), -1.0, 1.0);
        Tensor same = rand_uniform({3, 2, 2, 2}, sub(10), -1.0, 1.0);
        Tensor chan = rand_uniform({3}, sub(11), -1.0, 1.0);
        Tensor voxel = rand_uniform({1, 2, 2, 2}, sub(12), -1.0, 1.0);
        for (auto kind : {Elementwise::Add, Elementwise::Mul}) {
            const std::string k = kind == Elementwise::Add ? "add" : "mul";
            auto fa = [&](const Tensor& t) { return reduce_sum(sigmoid(elementwise(t, same, kind))); };
            push("elementwise." + k + ".lhs", gradcheck(fa, a, 1e-2), 1e-3);
            auto fc = [&](const Tensor& t) { return reduce_sum(sigmoid(elementwise(a, t, kind))); };
            push("elementwise." + k + ".chanvec", gradcheck(fc, chan, 1e-2), 1e-3);
            auto fv = [&](const Tensor& t) { return reduce_sum(sigmoid(elementwise(a, t, kind))); };
            push("elementwise." + k + ".voxelmap", gradcheck(fv, voxel, 1e-2), 1e-3);
        }
    }
    {
        Tensor x = rand_uniform({2, 2, 2, 2}, sub(13), -1.0, 1.0);
        Tensor other = rand_uniform({1, 2, 2, 2}, sub(14), -1.0, 1.0);
        auto f = [&](const Tensor& t) { return reduce_sum(sigmoid(concat_channels({t, other}))); };
        push("concat_channels", gradcheck(f, x, 1e-2), 1e-3);
    }
    {
        Tensor x = rand_uniform({3, 2, 2, 2}, sub(15), -1.0, 1.0);
        auto f = [](const Tensor& t) { return reduce_sum(sigmoid(global_avg_pool(t))); };
        push("global_avg_pool", gradcheck(f, x, 1e-2), 1e-3);
    }
    {
        Tensor x = rand_uniform({2, 2, 2, 3}, sub(319), -1.0, 1.0);
        auto f = [](const Tensor& t) { return reduce_sum(sigmoid(instance_norm(t))); };
        push("instance_norm", gradcheck(f, x, 1e-2), 2e-3);
    }
    {
        Tensor x = rand_uniform({3, 2, 2, 2}, sub(17), -1.0, 1.0);
        auto fm = [](const Tensor& t) { return reduce_sum(sigmoid(channel_mean(t))); };
        push("channel_mean", gradcheck(fm, x, 1e-2), 1e-3);
        // channel values spaced >= 0.1 apart per voxel so the max argument
        // cannot flip inside the finite-difference window
        Tensor spaced({3, 2, 2, 2});
        Rng rng(sub(18));
        for (int64_t v = 0; v < 8; ++v) {
            int order[3] = {0, 1, 2};
            std::swap(order[0], order[rng.next_below(3)]);
            std::swap(order[1], order[1 + rng.next_below(2)]);
            for (int c = 0; c < 3; ++c) {
                spaced.data()[order[c] * 8 + v] = static_cast<float>(0.2 * c + rng.uniform(-0.04, 0.04));
            }
        }
        auto fx = [](const Tensor& t) { return reduce_sum(sigmoid(channel_max(t))); };
        push("channel_max", gradcheck(fx, spaced, 1e-3), 1e-3);
    }
    {
        Tensor x = rand_uniform({8}, sub(19), -1.0, 1.0);
        auto f = [](const Tensor& t) { return reduce_sum(sigmoid(slice_vec(t, 2, 4))); };
        push("slice_vec", gradcheck(f, x, 1e-2), 1e-3);
        auto fsum = [](const Tensor& t) { return reduce_sum(t); };
        push("reduce_sum", gradcheck(fsum, x, 1e-3), 1e-6);
        auto fsc = [](const Tensor& t) { return reduce_sum(scale(sigmoid(t), 1.5)); };
        push("scale", gradcheck(fsc, x, 1e-2), 1e-3);
    }
    {
        Tensor logits = rand_uniform({3, 2, 2, 2}, sub(20), -1.0, 1.0);
        Tensor labels = rand_labels({3, 2, 2, 2}, sub(21), 0.3);
        auto f = [&](const Tensor& t) { return soft_dice_loss(sigmoid(t), labels); };
        push("soft_dice_loss", gradcheck(f, logits, 1e-2), 1e-3);

        Tensor a = rand_uniform({2, 2, 2, 2}, sub(22), -1.0, 1.0);
        Tensor b = rand_uniform({2, 2, 2, 2}, sub(23), -1.0, 1.0);
        auto f1 = [&](const Tensor& t) { return l1_mean(t, b); };
        push("l1_mean.lhs", gradcheck(f1, a, 1e-4), 1e-3);
        auto f2 = [&](const Tensor& t) { return l1_mean(a, t); };
        push("l1_mean.rhs", gradcheck(f2, b, 1e-4), 1e-3);
    }
    {
        Rng rng(sub(105));
        ResDilBlock block = make_res_dil(2, 0.01f, rng);
        Tensor x = rand_uniform({2, 4, 4, 4}, sub(1105), -1.0, 1.0);
        auto f = [&](const Tensor& t) { return reduce_sum(sigmoid(res_dil_forward(t, block))); };
        push("res_dil", gradcheck(f, x, 2e-3), 2e-3);
    }
    {
        Rng rng(sub(26));
        MpeModule mpe = make_mpe(2, 0.01f, rng);
        Tensor f_i = rand_uniform({2, 2, 2, 2}, sub(27), -1.0, 1.0);
        auto f = [&](const Tensor& t) { return reduce_sum(mpe_forward(t, mpe).alpha); };
        push("mpe", gradcheck(f, f_i, 1e-2), 1e-3);
    }
    {
        Tensor alpha = rand_uniform({2}, sub(28), -1.0, 1.0);
        Tensor beta = rand_uniform({2}, sub(29), -1.0, 1.0);
        Tensor gamma_v = rand_uniform({2}, sub(30), -1.0, 1.0);
        Tensor delta = rand_uniform({2}, sub(31), -1.0, 1.0);
        Tensor f_j = rand_uniform({2, 2, 2, 2}, sub(32), -1.0, 1.0);
        Tensor f_k = rand_uniform({2, 2, 2, 2}, sub(33), -1.0, 1.0);
        Tensor f_m = rand_uniform({2, 2, 2, 2}, sub(34), -1.0, 1.0);
        auto fj = [&](const Tensor& t) {
            return reduce_sum(sigmoid(lce_forward(Gamma{alpha, beta, gamma_v, delta}, t, f_k, f_m)));
        };
        push("lce.feature", gradcheck(fj, f_j, 1e-2), 1e-3);
        auto fa = [&](const Tensor& t) {
            return reduce_sum(sigmoid(lce_forward(Gamma{t, beta, gamma_v, delta}, f_j, f_k, f_m)));
        };
        push("lce.alpha", gradcheck(fa, alpha, 1e-2), 1e-3);
    }
    {
        Rng rng(sub(209));
        ChannelAttention att = make_channel_attention(8, 0.01f, rng);
        Tensor F = rand_uniform({8, 2, 2, 2}, sub(1209), -1.0, 1.0);
        auto f = [&](const Tensor& t) { return reduce_sum(channel_attention_forward(t, att)); };
        push("channel_attention", gradcheck(f, F, 1e-2), 2e-3);

        // channel values spaced per voxel so the max branch inside the block
        // stays fixed across the finite-difference window
        Rng srng(sub(426));
        SpatialAttention satt = make_spatial_attention(srng);
        Tensor spaced_f({8, 2, 2, 2});
        Rng drng(sub(1426));
        for (int64_t v = 0; v < 8; ++v) {
            int order[8];
            for (int c = 0; c < 8; ++c) order[c] = c;
            for (int c = 7; c > 0; --c) std::swap(order[c], order[drng.next_below(static_cast<uint64_t>(c) + 1)]);
            for (int c = 0; c < 8; ++c) {
                spaced_f.data()[order[c] * 8 + v] = static_cast<float>(0.15 * c - 0.5 + drng.uniform(-0.03, 0.03));
            }
        }
        auto fs = [&](const Tensor& t) { return reduce_sum(spatial_attention_forward(t, satt)); };
        push("spatial_attention", gradcheck(fs, spaced_f, 1e-2), 2e-3);

        Tensor cw = rand_uniform({8}, sub(37), 0.05, 0.95);
        Tensor sw = rand_uniform({1, 2, 2, 2}, sub(38), 0.05, 0.95);
        auto ff = [&](const Tensor& t) { return reduce_sum(sigmoid(fuse(t, cw, sw))); };
        push("fuse", gradcheck(ff, F, 1e-2), 1e-3);
    }

    // End-to-end training loss through a tiny network.
    {
        NetworkConfig cfg;
        cfg.input_size = 8;
        cfg.levels = 2;
        cfg.base_channels = 2;
        SegNetwork net = build_network(cfg, sub(39));
        auto params = collect_parameters(net);
        Volumes v;
        for (int m = 0; m < kNumModalities; ++m) {
            v[static_cast<size_t>(m)] = rand_uniform({1, 8, 8, 8}, sub(40 + static_cast<uint64_t>(m)), -1.0, 1.0);
        }
        Tensor labels = rand_labels({3, 8, 8, 8}, sub(44), 0.25);
        auto make_loss = [&]() {
            ForwardOutput out = forward(net, v, {true, true, true, true});
            return add(soft_dice_loss(out.probs, labels), correlation_l1_loss(out.cr_features, out.encoder_features));
        };
        double head_worst = 0.0;
        for (auto& p : params) {
            if (p.name == "dec.level0.head.weight" || p.name == "dec.level0.head.bias" ||
                p.name == "heads.bottleneck.weight" || p.name == "heads.bottleneck.bias") {
                GradcheckOptions opts;
                opts.h = 1e-2;
                head_worst = std::max(head_worst, gradcheck_leaf(make_loss, p.tensor, opts));
            }
        }
        push("network.loss.heads", head_worst, 2e-3);

        std::vector<Tensor> leaves;
        for (auto& p : params) leaves.push_back(p.tensor);
        double dir_worst = 0.0;
        for (uint64_t ds : {1u, 2u, 3u}) {
            dir_worst = std::max(dir_worst, gradcheck_directional(make_loss, leaves, 1e-3, sub(50 + ds)));
        }
        push("network.loss.directional", dir_worst, 2e-3);
    }
    return checks;
}

}  // namespace corrseg
