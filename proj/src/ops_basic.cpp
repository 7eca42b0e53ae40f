#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "corrseg/ops.hpp"
#include "corrseg/threading.hpp"

namespace corrseg {

namespace {

bool tracing(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::active()) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

void record(Tensor& out, std::function<void()> backward) {
    out.set_requires_grad(true);
    Tape::active()->record(out.impl(), std::move(backward));
}

void debug_check(const Tensor& out, const char* what) {
#ifndef NDEBUG
    check_finite(out, what);
#else
    (void)out;
    (void)what;
#endif
}

void require_rank4(const Tensor& t, const char* op) {
    if (t.shape().size() != 4) {
        throw std::invalid_argument(std::string(op) + ": expected a [C,D,H,W] tensor, got " + shape_str(t.shape()));
    }
}

}  // namespace

Tensor activation(const Tensor& input, Activation kind, float slope) {
    if (kind == Activation::LeakyRelu && !(slope > 0.0f && slope < 1.0f)) {
        throw std::invalid_argument("leaky_relu slope must lie in (0,1), got " + std::to_string(slope));
    }
    const int64_t n = input.numel();
    Tensor out(input.shape());
    const float* x = input.data();
    float* y = out.data();
    switch (kind) {
        case Activation::Relu:
            for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
            break;
        case Activation::LeakyRelu:
            for (int64_t i = 0; i < n; ++i) y[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
            break;
        case Activation::Sigmoid:
            for (int64_t i = 0; i < n; ++i) y[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x[i]))));
            break;
    }
    debug_check(out, "activation");

    if (tracing({&input})) {
        auto xi = input.impl();
        auto oi = out.impl();
        record(out, [xi, oi, kind, slope, n] {
            ensure_grad(*xi);
            const float* g = oi->grad.data();
            const float* xv = xi->data.data();
            const float* yv = oi->data.data();
            float* gx = xi->grad.data();
            switch (kind) {
                case Activation::Relu:
                    // Subgradient at 0 follows the positive branch.
                    for (int64_t i = 0; i < n; ++i) gx[i] += xv[i] >= 0.0f ? g[i] : 0.0f;
                    break;
                case Activation::LeakyRelu:
                    for (int64_t i = 0; i < n; ++i) gx[i] += xv[i] >= 0.0f ? g[i] : slope * g[i];
                    break;
                case Activation::Sigmoid:
                    for (int64_t i = 0; i < n; ++i) gx[i] += yv[i] * (1.0f - yv[i]) * g[i];
                    break;
            }
        });
    }
    return out;
}

Tensor relu(const Tensor& x) { return activation(x, Activation::Relu); }
Tensor leaky_relu(const Tensor& x, float slope) { return activation(x, Activation::LeakyRelu, slope); }
Tensor sigmoid(const Tensor& x) { return activation(x, Activation::Sigmoid); }

namespace {

enum class Broadcast { None, ChannelVec, VoxelMap };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Broadcast::None;
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() == 4 && bs.size() == 1 && bs[0] == as[0]) return Broadcast::ChannelVec;
    if (as.size() == 4 && bs.size() == 4 && bs[0] == 1 && bs[1] == as[1] && bs[2] == as[2] && bs[3] == as[3]) {
        return Broadcast::VoxelMap;
    }
    throw std::invalid_argument(std::string(op) + ": shapes not broadcastable: " + shape_str(as) + " vs " +
                                shape_str(bs));
}

}  // namespace

Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise kind) {
    const char* op = kind == Elementwise::Add ? "add" : "mul";
    const Broadcast bc = broadcast_kind(a, b, op);
    const int64_t n = a.numel();
    const int64_t spatial = bc == Broadcast::None ? 0 : a.numel() / a.shape()[0];
    const int channels = a.shape()[0];

    Tensor out(a.shape());
    const float* av = a.data();
    const float* bv = b.data();
    float* yv = out.data();
    switch (bc) {
        case Broadcast::None:
            if (kind == Elementwise::Add) {
                for (int64_t i = 0; i < n; ++i) yv[i] = av[i] + bv[i];
            } else {
                for (int64_t i = 0; i < n; ++i) yv[i] = av[i] * bv[i];
            }
            break;
        case Broadcast::ChannelVec:
            for (int c = 0; c < channels; ++c) {
                const float s = bv[c];
                const float* ac = av + c * spatial;
                float* yc = yv + c * spatial;
                if (kind == Elementwise::Add) {
                    for (int64_t i = 0; i < spatial; ++i) yc[i] = ac[i] + s;
                } else {
                    for (int64_t i = 0; i < spatial; ++i) yc[i] = ac[i] * s;
                }
            }
            break;
        case Broadcast::VoxelMap:
            for (int c = 0; c < channels; ++c) {
                const float* ac = av + c * spatial;
                float* yc = yv + c * spatial;
                if (kind == Elementwise::Add) {
                    for (int64_t i = 0; i < spatial; ++i) yc[i] = ac[i] + bv[i];
                } else {
                    for (int64_t i = 0; i < spatial; ++i) yc[i] = ac[i] * bv[i];
                }
            }
            break;
    }
    debug_check(out, op);
    if (out.is_scalar() && a.impl()->has_scalar_f64 && b.impl()->has_scalar_f64) {
        const double x = a.impl()->scalar_f64, y = b.impl()->scalar_f64;
        out.set_scalar_f64(kind == Elementwise::Add ? x + y : x * y);
    }

    if (tracing({&a, &b})) {
        auto ai = a.impl();
        auto bi = b.impl();
        auto oi = out.impl();
        record(out, [ai, bi, oi, kind, bc, n, spatial, channels] {
            const float* g = oi->grad.data();
            const float* av2 = ai->data.data();
            const float* bv2 = bi->data.data();
            if (ai->requires_grad) {
                ensure_grad(*ai);
                float* ga = ai->grad.data();
                if (kind == Elementwise::Add) {
                    for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
                } else {
                    switch (bc) {
                        case Broadcast::None:
                            for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * bv2[i];
                            break;
                        case Broadcast::ChannelVec:
                            for (int c = 0; c < channels; ++c) {
                                const float s = bv2[c];
                                const float* gc = g + c * spatial;
                                float* gac = ga + c * spatial;
                                for (int64_t i = 0; i < spatial; ++i) gac[i] += gc[i] * s;
                            }
                            break;
                        case Broadcast::VoxelMap:
                            for (int c = 0; c < channels; ++c) {
                                const float* gc = g + c * spatial;
                                float* gac = ga + c * spatial;
                                for (int64_t i = 0; i < spatial; ++i) gac[i] += gc[i] * bv2[i];
                            }
                            break;
                    }
                }
            }
            if (bi->requires_grad) {
                ensure_grad(*bi);
                float* gb = bi->grad.data();
                switch (bc) {
                    case Broadcast::None:
                        if (kind == Elementwise::Add) {
                            for (int64_t i = 0; i < n; ++i) gb[i] += g[i];
                        } else {
                            for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * av2[i];
                        }
                        break;
                    case Broadcast::ChannelVec:
                        for (int c = 0; c < channels; ++c) {
                            const float* gc = g + c * spatial;
                            const float* ac = av2 + c * spatial;
                            double s = 0.0;
                            if (kind == Elementwise::Add) {
                                for (int64_t i = 0; i < spatial; ++i) s += gc[i];
                            } else {
                                for (int64_t i = 0; i < spatial; ++i) s += static_cast<double>(gc[i]) * ac[i];
                            }
                            gb[c] += static_cast<float>(s);
                        }
                        break;
                    case Broadcast::VoxelMap:
                        for (int64_t i = 0; i < spatial; ++i) {
                            double s = 0.0;
                            for (int c = 0; c < channels; ++c) {
                                const int64_t j = c * spatial + i;
                                s += kind == Elementwise::Add ? static_cast<double>(g[j])
                                                              : static_cast<double>(g[j]) * av2[j];
                            }
                            gb[i] += static_cast<float>(s);
                        }
                        break;
                }
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::Add); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::Mul); }

Tensor scale(const Tensor& x, double c) {
    const int64_t n = x.numel();
    Tensor out(x.shape());
    const float* xv = x.data();
    float* yv = out.data();
    const float cf = static_cast<float>(c);
    for (int64_t i = 0; i < n; ++i) yv[i] = xv[i] * cf;
    debug_check(out, "scale");
    if (out.is_scalar() && x.impl()->has_scalar_f64) out.set_scalar_f64(x.impl()->scalar_f64 * c);

    if (tracing({&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        record(out, [xi, oi, cf, n] {
            ensure_grad(*xi);
            const float* g = oi->grad.data();
            float* gx = xi->grad.data();
            for (int64_t i = 0; i < n; ++i) gx[i] += cf * g[i];
        });
    }
    return out;
}

Tensor concat_channels(const std::vector<Tensor>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("concat_channels: no inputs");
    require_rank4(inputs[0], "concat_channels");
    const auto& s0 = inputs[0].shape();
    int total_c = 0;
    for (const Tensor& t : inputs) {
        require_rank4(t, "concat_channels");
        const auto& s = t.shape();
        if (s[1] != s0[1] || s[2] != s0[2] || s[3] != s0[3]) {
            throw std::invalid_argument("concat_channels: spatial dims differ: " + shape_str(s0) + " vs " +
                                        shape_str(s));
        }
        total_c += s[0];
    }
    Tensor out({total_c, s0[1], s0[2], s0[3]});
    float* yv = out.data();
    int64_t offset = 0;
    for (const Tensor& t : inputs) {
        std::copy(t.data(), t.data() + t.numel(), yv + offset);
        offset += t.numel();
    }

    bool any_grad = false;
    if (Tape::active()) {
        for (const Tensor& t : inputs) any_grad |= t.requires_grad();
    }
    if (any_grad) {
        std::vector<std::shared_ptr<TensorImpl>> ins;
        ins.reserve(inputs.size());
        for (const Tensor& t : inputs) ins.push_back(t.impl());
        auto oi = out.impl();
        record(out, [ins, oi] {
            const float* g = oi->grad.data();
            int64_t off = 0;
            for (const auto& t : ins) {
                const int64_t n = static_cast<int64_t>(t->data.size());
                if (t->requires_grad) {
                    ensure_grad(*t);
                    float* gt = t->grad.data();
                    for (int64_t i = 0; i < n; ++i) gt[i] += g[off + i];
                }
                off += n;
            }
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& input) {
    require_rank4(input, "global_avg_pool");
    const int channels = input.shape()[0];
    const int64_t spatial = input.numel() / channels;
    Tensor out({channels});
    const float* xv = input.data();
    float* yv = out.data();
    for (int c = 0; c < channels; ++c) {
        double s = 0.0;
        const float* xc = xv + c * spatial;
        for (int64_t i = 0; i < spatial; ++i) s += xc[i];
        yv[c] = static_cast<float>(s / static_cast<double>(spatial));
    }

    if (tracing({&input})) {
        auto xi = input.impl();
        auto oi = out.impl();
        record(out, [xi, oi, channels, spatial] {
            ensure_grad(*xi);
            const float* g = oi->grad.data();
            float* gx = xi->grad.data();
            const float inv = 1.0f / static_cast<float>(spatial);
            for (int c = 0; c < channels; ++c) {
                const float gc = g[c] * inv;
                float* gxc = gx + c * spatial;
                for (int64_t i = 0; i < spatial; ++i) gxc[i] += gc;
            }
        });
    }
    return out;
}

Tensor instance_norm(const Tensor& input, float eps) {
    require_rank4(input, "instance_norm");
    if (!(eps > 0.0f)) throw std::invalid_argument("instance_norm: eps must be positive");
    const int channels = input.shape()[0];
    const int64_t spatial = input.numel() / channels;

    Tensor out(input.shape());
    std::vector<float> inv_std(static_cast<size_t>(channels));
    const float* xv = input.data();
    float* yv = out.data();
    for (int c = 0; c < channels; ++c) {
        const float* xc = xv + c * spatial;
        double sum = 0.0, sq = 0.0;
        for (int64_t i = 0; i < spatial; ++i) {
            sum += xc[i];
            sq += static_cast<double>(xc[i]) * xc[i];
        }
        const double mean = sum / static_cast<double>(spatial);
        const double var = sq / static_cast<double>(spatial) - mean * mean;
        const double istd = 1.0 / std::sqrt(std::max(var, 0.0) + eps);
        inv_std[static_cast<size_t>(c)] = static_cast<float>(istd);
        float* yc = yv + c * spatial;
        for (int64_t i = 0; i < spatial; ++i) {
            yc[i] = static_cast<float>((xc[i] - mean) * istd);
        }
    }
    debug_check(out, "instance_norm");

    if (tracing({&input})) {
        auto xi = input.impl();
        auto oi = out.impl();
        record(out, [xi, oi, inv_std, channels, spatial] {
            ensure_grad(*xi);
            const float* g = oi->grad.data();
            const float* y = oi->data.data();
            float* gx = xi->grad.data();
            // dx = istd * (g - mean(g) - y * mean(g*y)), per channel.
            for (int c = 0; c < channels; ++c) {
                const float* gc = g + c * spatial;
                const float* yc = y + c * spatial;
                double gsum = 0.0, gysum = 0.0;
                for (int64_t i = 0; i < spatial; ++i) {
                    gsum += gc[i];
                    gysum += static_cast<double>(gc[i]) * yc[i];
                }
                const float gmean = static_cast<float>(gsum / static_cast<double>(spatial));
                const float gymean = static_cast<float>(gysum / static_cast<double>(spatial));
                const float istd = inv_std[static_cast<size_t>(c)];
                float* gxc = gx + c * spatial;
                for (int64_t i = 0; i < spatial; ++i) {
                    gxc[i] += istd * (gc[i] - gmean - yc[i] * gymean);
                }
            }
        });
    }
    return out;
}

Tensor channel_mean(const Tensor& input) {
    require_rank4(input, "channel_mean");
    const int channels = input.shape()[0];
    const int64_t spatial = input.numel() / channels;
    Tensor out({1, input.shape()[1], input.shape()[2], input.shape()[3]});
    const float* xv = input.data();
    float* yv = out.data();
    for (int64_t i = 0; i < spatial; ++i) {
        double s = 0.0;
        for (int c = 0; c < channels; ++c) s += xv[c * spatial + i];
        yv[i] = static_cast<float>(s / channels);
    }

    if (tracing({&input})) {
        auto xi = input.impl();
        auto oi = out.impl();
        record(out, [xi, oi, channels, spatial] {
            ensure_grad(*xi);
            const float* g = oi->grad.data();
            float* gx = xi->grad.data();
            const float inv = 1.0f / static_cast<float>(channels);
            for (int c = 0; c < channels; ++c) {
                float* gxc = gx + c * spatial;
                for (int64_t i = 0; i < spatial; ++i) gxc[i] += g[i] * inv;
            }
        });
    }
    return out;
}

Tensor channel_max(const Tensor& input) {
    require_rank4(input, "channel_max");
    const int channels = input.shape()[0];
    const int64_t spatial = input.numel() / channels;
    Tensor out({1, input.shape()[1], input.shape()[2], input.shape()[3]});
    std::vector<int> argmax(static_cast<size_t>(spatial));
    const float* xv = input.data();
    float* yv = out.data();
    for (int64_t i = 0; i < spatial; ++i) {
        float best = xv[i];
        int bc = 0;
        for (int c = 1; c < channels; ++c) {
            const float v = xv[c * spatial + i];
            if (v > best) {
                best = v;
                bc = c;
            }
        }
        yv[i] = best;
        argmax[static_cast<size_t>(i)] = bc;
    }

    if (tracing({&input})) {
        auto xi = input.impl();
        auto oi = out.impl();
        record(out, [xi, oi, argmax, spatial] {
            ensure_grad(*xi);
            const float* g = oi->grad.data();
            float* gx = xi->grad.data();
            for (int64_t i = 0; i < spatial; ++i) {
                gx[argmax[static_cast<size_t>(i)] * spatial + i] += g[i];
            }
        });
    }
    return out;
}

Tensor slice_vec(const Tensor& x, int offset, int len) {
    if (x.shape().size() != 1) {
        throw std::invalid_argument("slice_vec: expected a rank-1 tensor, got " + shape_str(x.shape()));
    }
    if (offset < 0 || len <= 0 || offset + len > x.shape()[0]) {
        throw std::invalid_argument("slice_vec: range [" + std::to_string(offset) + "," +
                                    std::to_string(offset + len) + ") out of bounds for " + shape_str(x.shape()));
    }
    Tensor out({len});
    std::copy(x.data() + offset, x.data() + offset + len, out.data());

    if (tracing({&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        record(out, [xi, oi, offset, len] {
            ensure_grad(*xi);
            const float* g = oi->grad.data();
            float* gx = xi->grad.data();
            for (int i = 0; i < len; ++i) gx[offset + i] += g[i];
        });
    }
    return out;
}

Tensor reduce_sum(const Tensor& x) {
    const int64_t n = x.numel();
    const float* xv = x.data();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += xv[i];
    Tensor out = Tensor::scalar(static_cast<float>(s));
    out.set_scalar_f64(s);

    if (tracing({&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        record(out, [xi, oi, n] {
            ensure_grad(*xi);
            const float g = oi->grad[0];
            float* gx = xi->grad.data();
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return out;
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.shape().size() != 1 || weight.shape().size() != 2 || bias.shape().size() != 1) {
        throw std::invalid_argument("dense: expected input [C_in], weight [C_out,C_in], bias [C_out], got " +
                                    shape_str(input.shape()) + ", " + shape_str(weight.shape()) + ", " +
                                    shape_str(bias.shape()));
    }
    const int c_in = input.shape()[0];
    const int c_out = weight.shape()[0];
    if (weight.shape()[1] != c_in || bias.shape()[0] != c_out) {
        throw std::invalid_argument("dense: dimension mismatch: input " + shape_str(input.shape()) + ", weight " +
                                    shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
    }
    Tensor out({c_out});
    const float* xv = input.data();
    const float* wv = weight.data();
    const float* bv = bias.data();
    float* yv = out.data();
    for (int o = 0; o < c_out; ++o) {
        double s = bv[o];
        const float* wr = wv + static_cast<int64_t>(o) * c_in;
        for (int i = 0; i < c_in; ++i) s += static_cast<double>(wr[i]) * xv[i];
        yv[o] = static_cast<float>(s);
    }
    debug_check(out, "dense");

    if (tracing({&input, &weight, &bias})) {
        auto xi = input.impl();
        auto wi = weight.impl();
        auto bi = bias.impl();
        auto oi = out.impl();
        record(out, [xi, wi, bi, oi, c_in, c_out] {
            const float* g = oi->grad.data();
            if (xi->requires_grad) {
                ensure_grad(*xi);
                float* gx = xi->grad.data();
                for (int i = 0; i < c_in; ++i) {
                    double s = 0.0;
                    for (int o = 0; o < c_out; ++o) s += static_cast<double>(g[o]) * wi->data[static_cast<int64_t>(o) * c_in + i];
                    gx[i] += static_cast<float>(s);
                }
            }
            if (wi->requires_grad) {
                ensure_grad(*wi);
                float* gw = wi->grad.data();
                for (int o = 0; o < c_out; ++o) {
                    const float go = g[o];
                    float* gwr = gw + static_cast<int64_t>(o) * c_in;
                    for (int i = 0; i < c_in; ++i) gwr[i] += go * xi->data[static_cast<size_t>(i)];
                }
            }
            if (bi->requires_grad) {
                ensure_grad(*bi);
                float* gb = bi->grad.data();
                for (int o = 0; o < c_out; ++o) gb[o] += g[o];
            }
        });
    }
    return out;
}

Tensor upsample3d(const Tensor& input, int factor) {
    require_rank4(input, "upsample3d");
    if (factor < 1) throw std::invalid_argument("upsample3d: factor must be >= 1");
    const auto& s = input.shape();
    const int C = s[0], D = s[1], H = s[2], W = s[3];
    if (factor == 1) {
        // Still a distinct tape node so backward splits cleanly.
        Tensor out(input.shape(), std::vector<float>(input.data(), input.data() + input.numel()));
        if (tracing({&input})) {
            auto xi = input.impl();
            auto oi = out.impl();
            const int64_t n = input.numel();
            record(out, [xi, oi, n] {
                ensure_grad(*xi);
                for (int64_t i = 0; i < n; ++i) xi->grad[i] += oi->grad[i];
            });
        }
        return out;
    }
    const int Do = D * factor, Ho = H * factor, Wo = W * factor;
    Tensor out({C, Do, Ho, Wo});
    const float* xv = input.data();
    float* yv = out.data();
    for (int c = 0; c < C; ++c) {
        for (int z = 0; z < Do; ++z) {
            const int zi = z / factor;
            for (int y = 0; y < Ho; ++y) {
                const int yi = y / factor;
                const float* row = xv + ((static_cast<int64_t>(c) * D + zi) * H + yi) * W;
                float* orow = yv + ((static_cast<int64_t>(c) * Do + z) * Ho + y) * Wo;
                for (int x = 0; x < Wo; ++x) orow[x] = row[x / factor];
            }
        }
    }

    if (tracing({&input})) {
        auto xi = input.impl();
        auto oi = out.impl();
        record(out, [xi, oi, C, D, H, W, factor] {
            ensure_grad(*xi);
            const int Do = D * factor, Ho = H * factor, Wo = W * factor;
            const float* g = oi->grad.data();
            float* gx = xi->grad.data();
            for (int c = 0; c < C; ++c) {
                for (int z = 0; z < Do; ++z) {
                    const int zi = z / factor;
                    for (int y = 0; y < Ho; ++y) {
                        const int yi = y / factor;
                        const float* grow = g + ((static_cast<int64_t>(c) * Do + z) * Ho + y) * Wo;
                        float* gxrow = gx + ((static_cast<int64_t>(c) * D + zi) * H + yi) * W;
                        for (int x = 0; x < Wo; ++x) gxrow[x / factor] += grow[x];
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace corrseg
