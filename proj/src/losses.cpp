#include "corrseg/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace corrseg {

Tensor soft_dice_loss(const Tensor& probs, const Tensor& labels, float eps) {
    if (probs.shape() != labels.shape()) {
        throw std::invalid_argument("soft_dice_loss: shape mismatch: probs " + shape_str(probs.shape()) +
                                    " vs labels " + shape_str(labels.shape()));
    }
    if (!(eps > 0.0f)) throw std::invalid_argument("soft_dice_loss: eps must be positive");
    const int regions = probs.shape()[0];
    const int64_t sp = probs.numel() / regions;

    const float* p = probs.data();
    const float* y = labels.data();
    std::vector<double> inter(static_cast<size_t>(regions)), denom(static_cast<size_t>(regions));
    double loss = 0.0;
    for (int r = 0; r < regions; ++r) {
        const float* pr = p + r * sp;
        const float* yr = y + r * sp;
        double a = 0.0, psum = 0.0, ysum = 0.0;
        for (int64_t i = 0; i < sp; ++i) {
            a += static_cast<double>(pr[i]) * yr[i];
            psum += pr[i];
            ysum += yr[i];
        }
        inter[static_cast<size_t>(r)] = a;
        denom[static_cast<size_t>(r)] = psum + ysum;
        loss += 1.0 - (2.0 * a + eps) / (psum + ysum + eps);
    }
    loss /= regions;
    Tensor out = Tensor::scalar(static_cast<float>(loss));
    out.set_scalar_f64(loss);

    if (Tape::active() && probs.requires_grad()) {
        auto pi = probs.impl();
        auto yi = labels.impl();
        auto oi = out.impl();
        out.set_requires_grad(true);
        Tape::active()->record(out.impl(), [pi, yi, oi, inter, denom, eps, regions, sp] {
            ensure_grad(*pi);
            const float g = oi->grad[0];
            const float* yv = yi->data.data();
            float* gp = pi->grad.data();
            for (int r = 0; r < regions; ++r) {
                const double num = 2.0 * inter[static_cast<size_t>(r)] + eps;
                const double den = denom[static_cast<size_t>(r)] + eps;
                // d/dp_v [ -(num/den) ] = -(2*y_v*den - num) / den^2
                const double c1 = 2.0 / den;
                const double c2 = num / (den * den);
                const float* yr = yv + r * sp;
                float* gr = gp + r * sp;
                const float scale = g / static_cast<float>(regions);
                for (int64_t i = 0; i < sp; ++i) {
                    gr[i] += scale * static_cast<float>(c2 - c1 * yr[i]);
                }
            }
        });
    }
    return out;
}

Tensor l1_mean(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("l1_mean: shape mismatch: " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    const int64_t n = a.numel();
    const float* av = a.data();
    const float* bv = b.data();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += std::abs(static_cast<double>(av[i]) - bv[i]);
    Tensor out = Tensor::scalar(static_cast<float>(s / static_cast<double>(n)));
    out.set_scalar_f64(s / static_cast<double>(n));

    if (Tape::active() && (a.requires_grad() || b.requires_grad())) {
        auto ai = a.impl();
        auto bi = b.impl();
        auto oi = out.impl();
        out.set_requires_grad(true);
        Tape::active()->record(out.impl(), [ai, bi, oi, n] {
            const float g = oi->grad[0] / static_cast<float>(n);
            if (ai->requires_grad) ensure_grad(*ai);
            if (bi->requires_grad) ensure_grad(*bi);
            for (int64_t i = 0; i < n; ++i) {
                const float d = ai->data[static_cast<size_t>(i)] - bi->data[static_cast<size_t>(i)];
                const float sg = d > 0.0f ? g : (d < 0.0f ? -g : 0.0f);
                if (ai->requires_grad) ai->grad[static_cast<size_t>(i)] += sg;
                if (bi->requires_grad) bi->grad[static_cast<size_t>(i)] -= sg;
            }
        });
    }
    return out;
}

Tensor correlation_l1_loss(const std::vector<Tensor>& cr_features, const std::vector<Tensor>& encoder_features) {
    if (cr_features.size() != encoder_features.size() || cr_features.empty()) {
        throw std::invalid_argument("correlation_l1_loss: feature list sizes differ");
    }
    Tensor sum;
    for (size_t i = 0; i < cr_features.size(); ++i) {
        Tensor term = l1_mean(cr_features[i], encoder_features[i]);
        sum = i == 0 ? term : add(sum, term);
    }
    return scale(sum, 1.0 / static_cast<double>(cr_features.size()));
}

}  // namespace corrseg
