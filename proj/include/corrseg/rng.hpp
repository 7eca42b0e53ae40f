#pragma once

#include <cstdint>

namespace corrseg {

// splitmix64-based generator with explicit uniform/normal sampling so that
// streams are reproducible bit-for-bit independent of the standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; one draw per call, the pair's second half is cached.
    double normal();

    // Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

private:
    uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Stable stream derivation, e.g. per (seed, sample index).
uint64_t hash_combine(uint64_t a, uint64_t b);

}  // namespace corrseg
