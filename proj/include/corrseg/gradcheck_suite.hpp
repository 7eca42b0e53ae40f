#pragma once

#include <string>
#include <vector>

#include "corrseg/gradcheck.hpp"

namespace corrseg {

struct OpCheck {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;

    bool passed() const { return max_error <= tolerance; }
};

// Finite-difference checks for every differentiable operation plus the
// end-to-end training loss through a tiny network (per-coordinate on the
// supervision heads, gradient-direction over all parameters). Data is
// derived deterministically from `seed`.
std::vector<OpCheck> run_gradcheck_suite(uint64_t seed);

}  // namespace corrseg
