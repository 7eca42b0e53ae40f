#include "corrseg/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace corrseg {

void Adam::step(std::vector<Parameter>& params) {
    ++step_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), step_);
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), step_);
    for (Parameter& p : params) {
        Moments& mom = moments_[p.name];
        const int64_t n = p.tensor.numel();
        if (mom.m.empty()) {
            mom.m.assign(static_cast<size_t>(n), 0.0f);
            mom.v.assign(static_cast<size_t>(n), 0.0f);
        }
        const float* g = p.tensor.grad();
        float* w = p.tensor.data();
        for (int64_t i = 0; i < n; ++i) {
            if (!std::isfinite(g[i])) {
                throw std::runtime_error("adam: non-finite gradient in parameter " + p.name);
            }
            mom.m[static_cast<size_t>(i)] = cfg_.beta1 * mom.m[static_cast<size_t>(i)] + (1.0f - cfg_.beta1) * g[i];
            mom.v[static_cast<size_t>(i)] =
                cfg_.beta2 * mom.v[static_cast<size_t>(i)] + (1.0f - cfg_.beta2) * g[i] * g[i];
            const double m_hat = mom.m[static_cast<size_t>(i)] / bc1;
            const double v_hat = mom.v[static_cast<size_t>(i)] / bc2;
            w[i] -= static_cast<float>(cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
        }
    }
}

bool PlateauSchedule::update(double epoch_loss, Adam& opt) {
    if (epoch_loss < best_loss - min_delta) {
        best_loss = epoch_loss;
        epochs_since_improve = 0;
        return false;
    }
    ++epochs_since_improve;
    if (epochs_since_improve >= patience) {
        opt.set_lr(static_cast<float>(opt.lr() * factor));
        epochs_since_improve = 0;
        return true;
    }
    return false;
}

}  // namespace corrseg
