#pragma once

#include <string>
#include <vector>

#include "corrseg/network.hpp"
#include "corrseg/optimizer.hpp"
#include "corrseg/phantom.hpp"

namespace corrseg {

struct LossBreakdown {
    double total = 0.0;
    double dice = 0.0;
    double l1 = 0.0;
};

struct TrainConfig {
    int epochs = 50;
    uint64_t seed = 42;
    AdamConfig adam;
    double plateau_factor = 0.5;
    int plateau_patience = 10;
    double plateau_min_delta = 1e-6;
    // Optional augmentation: random modality masks during training. Off by
    // default; training normally sees all four modalities.
    bool modality_dropout = false;
    std::string checkpoint_dir;  // best model written here when non-empty
    std::string log_csv;         // per-epoch CSV written here when non-empty
    bool verbose = false;
};

struct EpochStats {
    int epoch = 0;
    double total = 0.0;
    double dice = 0.0;
    double l1 = 0.0;
    double lr = 0.0;
};

struct TrainingLog {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_total = 0.0;
};

// One optimizer step per sample (batch size 1), seeded shuffling per epoch,
// plateau schedule on the epoch mean, best checkpoint by epoch mean total.
// Aborts with epoch/sample context on non-finite loss.
TrainingLog train(SegNetwork& net, const std::vector<Sample>& dataset, const TrainConfig& cfg);

// Single forward/backward/update on one sample; returns the loss breakdown.
// Exposed for the single-sample overfitting check.
LossBreakdown train_step(SegNetwork& net, std::vector<Parameter>& params, Adam& opt, const Sample& sample,
                         const ModalityMask& mask);

}  // namespace corrseg
