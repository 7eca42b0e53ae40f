#include "corrseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "corrseg/rng.hpp"

namespace corrseg {

double gradcheck(const ScalarFn& f, const Tensor& input, const GradcheckOptions& opts) {
    if (!all_finite(input)) throw std::invalid_argument("gradcheck: input must be finite");

    // Analytic pass.
    Tensor x = input.clone();
    x.set_requires_grad(true);
    std::vector<float> analytic;
    {
        TapeScope scope;
        Tensor loss = f(x);
        if (!loss.is_scalar()) {
            throw std::invalid_argument("gradcheck: f must produce a scalar, got shape " + shape_str(loss.shape()));
        }
        scope.backward(loss);
        analytic.assign(x.grad(), x.grad() + x.numel());
    }

    // Coordinate set.
    const int64_t n = x.numel();
    std::vector<int64_t> coords;
    if (opts.max_coords > 0 && opts.max_coords < n) {
        Rng rng(opts.sample_seed);
        coords.reserve(static_cast<size_t>(opts.max_coords));
        for (int i = 0; i < opts.max_coords; ++i) coords.push_back(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n))));
        std::sort(coords.begin(), coords.end());
        coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    } else {
        coords.resize(static_cast<size_t>(n));
        std::iota(coords.begin(), coords.end(), 0);
    }

    // Numeric pass; no tape active, pure forward evaluations.
    Tensor probe = input.clone();
    double max_rel = 0.0;
    for (int64_t i : coords) {
        const float orig = probe.data()[i];
        const float xp = static_cast<float>(static_cast<double>(orig) + opts.h);
        const float xm = static_cast<float>(static_cast<double>(orig) - opts.h);
        probe.data()[i] = xp;
        const double fp = f(probe).item_f64();
        probe.data()[i] = xm;
        const double fm = f(probe).item_f64();
        probe.data()[i] = orig;

        const double step = static_cast<double>(xp) - static_cast<double>(xm);
        const double numeric = (fp - fm) / step;
        const double a = static_cast<double>(analytic[static_cast<size_t>(i)]);
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

double gradcheck(const ScalarFn& f, const Tensor& input, double h) {
    GradcheckOptions opts;
    opts.h = h;
    return gradcheck(f, input, opts);
}

double gradcheck_directional(const std::function<Tensor()>& make_loss, const std::vector<Tensor>& leaves,
                             double h, uint64_t direction_seed) {
    std::vector<bool> had_requires;
    for (const Tensor& t : leaves) had_requires.push_back(t.requires_grad());

    std::vector<std::vector<float>> grads(leaves.size());
    {
        for (Tensor t : leaves) {
            t.set_requires_grad(true);
            t.zero_grad();
        }
        TapeScope scope;
        Tensor loss = make_loss();
        scope.backward(loss);
        for (size_t i = 0; i < leaves.size(); ++i) {
            grads[i].assign(leaves[i].grad(), leaves[i].grad() + leaves[i].numel());
            Tensor t = leaves[i];
            t.zero_grad();
        }
    }
    for (size_t i = 0; i < leaves.size(); ++i) {
        Tensor t = leaves[i];
        t.set_requires_grad(false);
    }

    // Direction: the normalized analytic gradient itself, so the signal is
    // ||grad|| rather than a random projection that dilutes it by sqrt(N).
    // direction_seed blends in a small random component to avoid checking
    // only the exact gradient axis.
    Rng rng(direction_seed);
    std::vector<std::vector<double>> dir(leaves.size());
    double gnorm_sq = 0.0;
    for (const auto& g : grads) {
        for (float v : g) gnorm_sq += static_cast<double>(v) * v;
    }
    const double gnorm = std::sqrt(gnorm_sq);
    int64_t total = 0;
    for (const Tensor& t : leaves) total += t.numel();
    std::vector<std::vector<double>> noise(leaves.size());
    double rnorm_sq = 0.0;
    for (size_t i = 0; i < leaves.size(); ++i) {
        noise[i].resize(static_cast<size_t>(leaves[i].numel()));
        for (double& v : noise[i]) {
            v = rng.normal();
            rnorm_sq += v * v;
        }
    }
    const double rnorm = std::sqrt(std::max(rnorm_sq, 1e-300));
    double norm_sq = 0.0;
    for (size_t i = 0; i < leaves.size(); ++i) {
        dir[i].resize(static_cast<size_t>(leaves[i].numel()));
        for (size_t j = 0; j < dir[i].size(); ++j) {
            const double g = gnorm > 0.0 ? grads[i][j] / gnorm : 0.0;
            dir[i][j] = g + 0.05 * noise[i][j] / rnorm;
            norm_sq += dir[i][j] * dir[i][j];
        }
    }
    (void)total;
    const double inv_norm = 1.0 / std::sqrt(norm_sq);

    std::vector<std::vector<float>> saved(leaves.size());
    for (size_t i = 0; i < leaves.size(); ++i) {
        saved[i].assign(leaves[i].data(), leaves[i].data() + leaves[i].numel());
    }
    auto apply = [&](double sign) {
        for (size_t i = 0; i < leaves.size(); ++i) {
            Tensor t = leaves[i];
            for (int64_t j = 0; j < t.numel(); ++j) {
                t.data()[j] = static_cast<float>(static_cast<double>(saved[i][static_cast<size_t>(j)]) +
                                                 sign * h * dir[i][static_cast<size_t>(j)] * inv_norm);
            }
        }
    };
    apply(+1.0);
    std::vector<std::vector<float>> plus(leaves.size());
    for (size_t i = 0; i < leaves.size(); ++i) plus[i].assign(leaves[i].data(), leaves[i].data() + leaves[i].numel());
    const double fp = make_loss().item_f64();
    apply(-1.0);
    double analytic = 0.0;  // <grad, effective step>/(2h), float rounding measured out
    for (size_t i = 0; i < leaves.size(); ++i) {
        for (int64_t j = 0; j < leaves[i].numel(); ++j) {
            const double step = static_cast<double>(plus[i][static_cast<size_t>(j)]) - leaves[i].data()[j];
            analytic += static_cast<double>(grads[i][static_cast<size_t>(j)]) * step;
        }
    }
    analytic /= 2.0 * h;
    const double fm = make_loss().item_f64();
    for (size_t i = 0; i < leaves.size(); ++i) {
        Tensor t = leaves[i];
        std::copy(saved[i].begin(), saved[i].end(), t.data());
        t.set_requires_grad(had_requires[i]);
    }
    const double numeric = (fp - fm) / (2.0 * h);
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

double gradcheck_leaf(const std::function<Tensor()>& make_loss, Tensor leaf, const GradcheckOptions& opts) {
    const bool had_requires = leaf.requires_grad();
    leaf.set_requires_grad(true);
    std::vector<float> analytic;
    {
        TapeScope scope;
        Tensor loss = make_loss();
        if (!loss.is_scalar()) {
            throw std::invalid_argument("gradcheck_leaf: loss must be scalar, got shape " + shape_str(loss.shape()));
        }
        leaf.zero_grad();
        scope.backward(loss);
        analytic.assign(leaf.grad(), leaf.grad() + leaf.numel());
        leaf.zero_grad();
    }

    const int64_t n = leaf.numel();
    std::vector<int64_t> coords;
    if (opts.max_coords > 0 && opts.max_coords < n) {
        Rng rng(opts.sample_seed);
        for (int i = 0; i < opts.max_coords; ++i) coords.push_back(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n))));
        std::sort(coords.begin(), coords.end());
        coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    } else {
        coords.resize(static_cast<size_t>(n));
        std::iota(coords.begin(), coords.end(), 0);
    }

    leaf.set_requires_grad(false);  // numeric passes must not re-enter the tape
    double max_rel = 0.0;
    for (int64_t i : coords) {
        const float orig = leaf.data()[i];
        const float xp = static_cast<float>(static_cast<double>(orig) + opts.h);
        const float xm = static_cast<float>(static_cast<double>(orig) - opts.h);
        leaf.data()[i] = xp;
        const double fp = make_loss().item_f64();
        leaf.data()[i] = xm;
        const double fm = make_loss().item_f64();
        leaf.data()[i] = orig;

        const double step = static_cast<double>(xp) - static_cast<double>(xm);
        const double numeric = (fp - fm) / step;
        const double a = static_cast<double>(analytic[static_cast<size_t>(i)]);
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, rel);
    }
    leaf.set_requires_grad(had_requires);
    return max_rel;
}

}  // namespace corrseg
