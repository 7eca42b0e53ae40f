#pragma once

#include <functional>

#include "corrseg/tape.hpp"
#include "corrseg/tensor.hpp"

namespace corrseg {

// f maps the perturbed tensor to a scalar loss tensor; it must rebuild the
// computation from scratch on every call (the harness evaluates it with and
// without an active tape).
using ScalarFn = std::function<Tensor(const Tensor&)>;

struct GradcheckOptions {
    double h = 1e-3;            // central-difference step
    int max_coords = 0;         // 0 = all coordinates, else a seeded sample
    uint64_t sample_seed = 0x5eedu;
};

// Compares the tape gradient of f at `input` against central differences.
// Returns max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8) over the checked
// coordinates. The effective step is measured after float rounding of the
// perturbed coordinate so the representation error cancels.
double gradcheck(const ScalarFn& f, const Tensor& input, const GradcheckOptions& opts = {});

double gradcheck(const ScalarFn& f, const Tensor& input, double h);

// Variant for checking a leaf tensor that the loss closure uses in place
// (e.g. a live model parameter): the analytic gradient is read from `leaf`
// after backward, and the numeric pass perturbs `leaf`'s storage directly.
double gradcheck_leaf(const std::function<Tensor()>& make_loss, Tensor leaf, const GradcheckOptions& opts = {});

// Directional check across many leaves at once: compares <grad, d> for a
// random unit direction d over all given tensors against the central
// difference of the loss along d. Aggregation keeps the quotient well away
// from the float32 noise floor, so this is the instrument of choice for
// deep parameters whose individual coordinates are tiny.
double gradcheck_directional(const std::function<Tensor()>& make_loss, const std::vector<Tensor>& leaves,
                             double h, uint64_t direction_seed);

}  // namespace corrseg
