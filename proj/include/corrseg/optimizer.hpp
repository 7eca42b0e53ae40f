#pragma once

#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "corrseg/network.hpp"

namespace corrseg {

struct AdamConfig {
    float lr = 5e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Standard Adam with bias correction; per-parameter moment state keyed by
// parameter name. Throws on non-finite gradients, naming the parameter.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::vector<Parameter>& params);

    float lr() const { return cfg_.lr; }
    void set_lr(float lr) { cfg_.lr = lr; }
    int step_count() const { return step_; }

private:
    struct Moments {
        std::vector<float> m, v;
    };
    AdamConfig cfg_;
    int step_ = 0;
    std::unordered_map<std::string, Moments> moments_;
};

// Reduce-on-plateau: halves the learning rate after `patience` consecutive
// epochs without improving the best loss by more than min_delta.
struct PlateauSchedule {
    double factor = 0.5;
    int patience = 10;
    double min_delta = 1e-6;

    double best_loss = std::numeric_limits<double>::infinity();
    int epochs_since_improve = 0;

    // Returns true when the learning rate was reduced this call.
    bool update(double epoch_loss, Adam& opt);
};

}  // namespace corrseg
