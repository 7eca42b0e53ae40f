#include <algorithm>
#include <stdexcept>
#include <vector>

#include "corrseg/ops.hpp"
#include "corrseg/threading.hpp"

namespace corrseg {

namespace {

// Accumulator element type for the volume-sized conv scratch buffers.
// double keeps each output a correctly-rounded sum, which the
// finite-difference checks rely on.
using acc_t = double;

struct ConvDims {
    int ci, co, k, d, s;        // channels, kernel, dilation, stride
    int D, H, W;                // input spatial
    int Do, Ho, Wo;             // output spatial
    int64_t in_sp, out_sp;      // spatial sizes
};

ConvDims conv_dims(const Tensor& input, const Tensor& weight, const Tensor& bias, int dilation, int stride) {
    if (input.shape().size() != 4) {
        throw std::invalid_argument("conv3d: expected input [C,D,H,W], got " + shape_str(input.shape()));
    }
    if (weight.shape().size() != 5) {
        throw std::invalid_argument("conv3d: expected weight [C_out,C_in,k,k,k], got " + shape_str(weight.shape()));
    }
    const auto& ws = weight.shape();
    const int k = ws[2];
    if (ws[3] != k || ws[4] != k) {
        throw std::invalid_argument("conv3d: kernel must be cubic, got " + shape_str(ws));
    }
    if (k % 2 == 0) {
        throw std::invalid_argument("conv3d: kernel size must be odd, got " + std::to_string(k));
    }
    if (dilation != 1 && dilation != 2 && dilation != 4) {
        throw std::invalid_argument("conv3d: dilation must be 1, 2 or 4, got " + std::to_string(dilation));
    }
    if (stride != 1 && stride != 2) {
        throw std::invalid_argument("conv3d: stride must be 1 or 2, got " + std::to_string(stride));
    }
    if (ws[1] != input.shape()[0]) {
        throw std::invalid_argument("conv3d: weight C_in " + shape_str(ws) + " does not match input channels " +
                                    shape_str(input.shape()));
    }
    if (bias.shape().size() != 1 || bias.shape()[0] != ws[0]) {
        throw std::invalid_argument("conv3d: bias " + shape_str(bias.shape()) + " does not match C_out " +
                                    std::to_string(ws[0]));
    }
    ConvDims dm;
    dm.ci = ws[1];
    dm.co = ws[0];
    dm.k = k;
    dm.d = dilation;
    dm.s = stride;
    dm.D = input.shape()[1];
    dm.H = input.shape()[2];
    dm.W = input.shape()[3];
    dm.Do = (dm.D - 1) / stride + 1;
    dm.Ho = (dm.H - 1) / stride + 1;
    dm.Wo = (dm.W - 1) / stride + 1;
    dm.in_sp = static_cast<int64_t>(dm.D) * dm.H * dm.W;
    dm.out_sp = static_cast<int64_t>(dm.Do) * dm.Ho * dm.Wo;
    return dm;
}

// Stride-1 forward for one output channel: shift-and-accumulate. For each
// (ic, tap) the inner x loop is contiguous, clipped to the zero-padding
// boundary. Accumulation order is fixed per element, so the result does not
// depend on how channels are distributed over threads.
void fwd_channel_s1(const ConvDims& dm, const float* in, const float* w_oc, float bias, float* out_oc,
                    std::vector<acc_t>& acc) {
    acc.assign(static_cast<size_t>(dm.in_sp), static_cast<acc_t>(bias));
    const int r = dm.k / 2;
    for (int ic = 0; ic < dm.ci; ++ic) {
        const float* in_c = in + ic * dm.in_sp;
        const float* w_ic = w_oc + static_cast<int64_t>(ic) * dm.k * dm.k * dm.k;
        for (int kz = 0; kz < dm.k; ++kz) {
            const int dz = dm.d * (kz - r);
            const int z0 = std::max(0, -dz), z1 = std::min(dm.D, dm.D - dz);
            for (int ky = 0; ky < dm.k; ++ky) {
                const int dy = dm.d * (ky - r);
                const int y0 = std::max(0, -dy), y1 = std::min(dm.H, dm.H - dy);
                for (int kx = 0; kx < dm.k; ++kx) {
                    const int dx = dm.d * (kx - r);
                    const int x0 = std::max(0, -dx), x1 = std::min(dm.W, dm.W - dx);
                    const float wv = w_ic[(kz * dm.k + ky) * dm.k + kx];
                    if (wv == 0.0f) continue;
                    for (int z = z0; z < z1; ++z) {
                        for (int y = y0; y < y1; ++y) {
                            acc_t* arow = acc.data() + (static_cast<int64_t>(z) * dm.H + y) * dm.W;
                            const float* irow = in_c + (static_cast<int64_t>(z + dz) * dm.H + (y + dy)) * dm.W + dx;
                            for (int x = x0; x < x1; ++x) arow[x] += static_cast<acc_t>(wv) * irow[x];
                        }
                    }
                }
            }
        }
    }
    for (int64_t i = 0; i < dm.in_sp; ++i) out_oc[i] = static_cast<float>(acc[static_cast<size_t>(i)]);
}

// Strided forward for one output channel: per-voxel gather (the strided
// convs sit on 8x smaller outputs, so this path is cheap).
void fwd_channel_strided(const ConvDims& dm, const float* in, const float* w_oc, float bias, float* out_oc) {
    const int r = dm.k / 2;
    for (int zo = 0; zo < dm.Do; ++zo) {
        for (int yo = 0; yo < dm.Ho; ++yo) {
            for (int xo = 0; xo < dm.Wo; ++xo) {
                acc_t s = bias;
                for (int ic = 0; ic < dm.ci; ++ic) {
                    const float* in_c = in + ic * dm.in_sp;
                    const float* w_ic = w_oc + static_cast<int64_t>(ic) * dm.k * dm.k * dm.k;
                    for (int kz = 0; kz < dm.k; ++kz) {
                        const int z = dm.s * zo + dm.d * (kz - r);
                        if (z < 0 || z >= dm.D) continue;
                        for (int ky = 0; ky < dm.k; ++ky) {
                            const int y = dm.s * yo + dm.d * (ky - r);
                            if (y < 0 || y >= dm.H) continue;
                            for (int kx = 0; kx < dm.k; ++kx) {
                                const int x = dm.s * xo + dm.d * (kx - r);
                                if (x < 0 || x >= dm.W) continue;
                                s += static_cast<acc_t>(w_ic[(kz * dm.k + ky) * dm.k + kx]) *
                                     in_c[(static_cast<int64_t>(z) * dm.H + y) * dm.W + x];
                            }
                        }
                    }
                }
                out_oc[(static_cast<int64_t>(zo) * dm.Ho + yo) * dm.Wo + xo] = static_cast<float>(s);
            }
        }
    }
}

// dL/d(input) for stride 1: same shift structure with flipped offsets,
// parallel over input channels so writes stay disjoint.
void bwd_input_s1(const ConvDims& dm, const float* gout, const float* w, float* gin, int ic,
                  std::vector<acc_t>& acc) {
    acc.assign(static_cast<size_t>(dm.in_sp), acc_t{0});
    const int r = dm.k / 2;
    for (int oc = 0; oc < dm.co; ++oc) {
        const float* g_oc = gout + oc * dm.out_sp;
        const float* w_ic = w + (static_cast<int64_t>(oc) * dm.ci + ic) * dm.k * dm.k * dm.k;
        for (int kz = 0; kz < dm.k; ++kz) {
            const int dz = dm.d * (kz - r);
            const int z0 = std::max(0, dz), z1 = std::min(dm.D, dm.D + dz);
            for (int ky = 0; ky < dm.k; ++ky) {
                const int dy = dm.d * (ky - r);
                const int y0 = std::max(0, dy), y1 = std::min(dm.H, dm.H + dy);
                for (int kx = 0; kx < dm.k; ++kx) {
                    const int dx = dm.d * (kx - r);
                    const int x0 = std::max(0, dx), x1 = std::min(dm.W, dm.W + dx);
                    const float wv = w_ic[(kz * dm.k + ky) * dm.k + kx];
                    if (wv == 0.0f) continue;
                    for (int z = z0; z < z1; ++z) {
                        for (int y = y0; y < y1; ++y) {
                            acc_t* arow = acc.data() + (static_cast<int64_t>(z) * dm.H + y) * dm.W;
                            const float* grow = g_oc + (static_cast<int64_t>(z - dz) * dm.H + (y - dy)) * dm.W - dx;
                            for (int x = x0; x < x1; ++x) arow[x] += static_cast<acc_t>(wv) * grow[x];
                        }
                    }
                }
            }
        }
    }
    float* gin_c = gin + ic * dm.in_sp;
    for (int64_t i = 0; i < dm.in_sp; ++i) gin_c[i] += static_cast<float>(acc[static_cast<size_t>(i)]);
}

void bwd_input_strided(const ConvDims& dm, const float* gout, const float* w, float* gin, int ic) {
    const int r = dm.k / 2;
    float* gin_c = gin + ic * dm.in_sp;
    for (int oc = 0; oc < dm.co; ++oc) {
        const float* g_oc = gout + oc * dm.out_sp;
        const float* w_ic = w + (static_cast<int64_t>(oc) * dm.ci + ic) * dm.k * dm.k * dm.k;
        for (int zo = 0; zo < dm.Do; ++zo) {
            for (int yo = 0; yo < dm.Ho; ++yo) {
                for (int xo = 0; xo < dm.Wo; ++xo) {
                    const float g = g_oc[(static_cast<int64_t>(zo) * dm.Ho + yo) * dm.Wo + xo];
                    if (g == 0.0f) continue;
                    for (int kz = 0; kz < dm.k; ++kz) {
                        const int z = dm.s * zo + dm.d * (kz - r);
                        if (z < 0 || z >= dm.D) continue;
                        for (int ky = 0; ky < dm.k; ++ky) {
                            const int y = dm.s * yo + dm.d * (ky - r);
                            if (y < 0 || y >= dm.H) continue;
                            for (int kx = 0; kx < dm.k; ++kx) {
                                const int x = dm.s * xo + dm.d * (kx - r);
                                if (x < 0 || x >= dm.W) continue;
                                gin_c[(static_cast<int64_t>(z) * dm.H + y) * dm.W + x] +=
                                    g * w_ic[(kz * dm.k + ky) * dm.k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

// dL/d(weight) and dL/d(bias) for one output channel. The stride-1 tap sums
// are dot products over clipped slices; four independent accumulators keep
// the order fixed while letting the compiler pipeline the chains.
void bwd_weight_channel(const ConvDims& dm, const float* in, const float* gout, float* gw_oc, float* gb, int oc) {
    const int r = dm.k / 2;
    const float* g_oc = gout + oc * dm.out_sp;
    {
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
        int64_t i = 0;
        for (; i + 4 <= dm.out_sp; i += 4) {
            a0 += g_oc[i];
            a1 += g_oc[i + 1];
            a2 += g_oc[i + 2];
            a3 += g_oc[i + 3];
        }
        for (; i < dm.out_sp; ++i) a0 += g_oc[i];
        gb[oc] += static_cast<float>(((a0 + a1) + (a2 + a3)));
    }
    for (int ic = 0; ic < dm.ci; ++ic) {
        const float* in_c = in + ic * dm.in_sp;
        float* gw_ic = gw_oc + static_cast<int64_t>(ic) * dm.k * dm.k * dm.k;
        for (int kz = 0; kz < dm.k; ++kz) {
            const int dz = dm.d * (kz - r);
            for (int ky = 0; ky < dm.k; ++ky) {
                const int dy = dm.d * (ky - r);
                for (int kx = 0; kx < dm.k; ++kx) {
                    const int dx = dm.d * (kx - r);
                    double sum = 0.0;
                    if (dm.s == 1) {
                        const int z0 = std::max(0, -dz), z1 = std::min(dm.D, dm.D - dz);
                        const int y0 = std::max(0, -dy), y1 = std::min(dm.H, dm.H - dy);
                        const int x0 = std::max(0, -dx), x1 = std::min(dm.W, dm.W - dx);
                        for (int z = z0; z < z1; ++z) {
                            for (int y = y0; y < y1; ++y) {
                                const float* grow = g_oc + (static_cast<int64_t>(z) * dm.H + y) * dm.W;
                                const float* irow = in_c + (static_cast<int64_t>(z + dz) * dm.H + (y + dy)) * dm.W + dx;
                                double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                                int x = x0;
                                for (; x + 4 <= x1; x += 4) {
                                    a0 += static_cast<double>(grow[x]) * irow[x];
                                    a1 += static_cast<double>(grow[x + 1]) * irow[x + 1];
                                    a2 += static_cast<double>(grow[x + 2]) * irow[x + 2];
                                    a3 += static_cast<double>(grow[x + 3]) * irow[x + 3];
                                }
                                for (; x < x1; ++x) a0 += static_cast<double>(grow[x]) * irow[x];
                                sum += (a0 + a1) + (a2 + a3);
                            }
                        }
                    } else {
                        for (int zo = 0; zo < dm.Do; ++zo) {
                            const int z = dm.s * zo + dz;
                            if (z < 0 || z >= dm.D) continue;
                            for (int yo = 0; yo < dm.Ho; ++yo) {
                                const int y = dm.s * yo + dy;
                                if (y < 0 || y >= dm.H) continue;
                                for (int xo = 0; xo < dm.Wo; ++xo) {
                                    const int x = dm.s * xo + dx;
                                    if (x < 0 || x >= dm.W) continue;
                                    sum += static_cast<double>(g_oc[(static_cast<int64_t>(zo) * dm.Ho + yo) * dm.Wo + xo]) *
                                           in_c[(static_cast<int64_t>(z) * dm.H + y) * dm.W + x];
                                }
                            }
                        }
                    }
                    gw_ic[(kz * dm.k + ky) * dm.k + kx] += static_cast<float>(sum);
                }
            }
        }
    }
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int dilation, int stride) {
    const ConvDims dm = conv_dims(input, weight, bias, dilation, stride);
    Tensor out({dm.co, dm.Do, dm.Ho, dm.Wo});

    const float* in = input.data();
    const float* w = weight.data();
    const float* b = bias.data();
    float* y = out.data();
    const int64_t wsz_per_oc = static_cast<int64_t>(dm.ci) * dm.k * dm.k * dm.k;

    parallel_for(dm.co, [&](int64_t oc) {
        if (dm.s == 1) {
            std::vector<acc_t> acc;
            fwd_channel_s1(dm, in, w + oc * wsz_per_oc, b[oc], y + oc * dm.out_sp, acc);
        } else {
            fwd_channel_strided(dm, in, w + oc * wsz_per_oc, b[oc], y + oc * dm.out_sp);
        }
    });
#ifndef NDEBUG
    check_finite(out, "conv3d");
#endif

    if (Tape::active() && (input.requires_grad() || weight.requires_grad() || bias.requires_grad())) {
        auto xi = input.impl();
        auto wi = weight.impl();
        auto bi = bias.impl();
        auto oi = out.impl();
        out.set_requires_grad(true);
        Tape::active()->record(out.impl(), [xi, wi, bi, oi, dm, wsz_per_oc] {
            const float* gout = oi->grad.data();
            const float* in2 = xi->data.data();
            const float* w2 = wi->data.data();
            if (wi->requires_grad || bi->requires_grad) {
                ensure_grad(*wi);
                ensure_grad(*bi);
                float* gw = wi->grad.data();
                float* gb = bi->grad.data();
                parallel_for(dm.co, [&](int64_t oc) {
                    bwd_weight_channel(dm, in2, gout, gw + oc * wsz_per_oc, gb, static_cast<int>(oc));
                });
            }
            if (xi->requires_grad) {
                ensure_grad(*xi);
                float* gin = xi->grad.data();
                parallel_for(dm.ci, [&](int64_t ic) {
                    if (dm.s == 1) {
                        std::vector<acc_t> acc;
                        bwd_input_s1(dm, gout, w2, gin, static_cast<int>(ic), acc);
                    } else {
                        bwd_input_strided(dm, gout, w2, gin, static_cast<int>(ic));
                    }
                });
            }
        });
    }
    return out;
}

}  // namespace corrseg
