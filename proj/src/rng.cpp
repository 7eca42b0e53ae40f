#include "corrseg/rng.hpp"

#include <cmath>

namespace corrseg {

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    // Box-Muller on open-interval uniforms.
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

uint64_t hash_combine(uint64_t a, uint64_t b) {
    // boost-style mix, widened to 64 bit.
    a ^= b + 0x9e3779b97f4a7c15ull + (a << 12) + (a >> 4);
    return a;
}

}  // namespace corrseg
