#pragma once

#include <array>
#include <string>
#include <vector>

#include "corrseg/network.hpp"
#include "corrseg/phantom.hpp"

namespace corrseg {

struct ModalitySubset {
    std::array<bool, kNumModalities> present;

    bool all_present() const { return present[0] && present[1] && present[2] && present[3]; }
    std::string name() const;  // e.g. "FLAIR+T1c"
};

// All 15 nonempty subsets in the reference table's row order: singles, pairs,
// triples, then the full set.
std::vector<ModalitySubset> enumerate_subsets();

// 2|P & T| / (|P| + |T|); 1.0 when both masks are empty. Inputs must be
// binary and equally shaped.
double dice_score(const Tensor& pred_mask, const Tensor& true_mask);

struct EvalRow {
    ModalitySubset subset;
    std::array<double, kNumRegions> dice;  // complete, core, enhancing

    double mean_dice() const { return (dice[0] + dice[1] + dice[2]) / 3.0; }
};

struct EvalReport {
    std::vector<EvalRow> rows;  // 15, subset order as enumerated
    int full_row_index = -1;    // the all-present reference row

    double mean_over_subsets() const;
};

// Per subset: substitute missing modalities, forward, binarize the sigmoid
// probabilities at `threshold`, then average the per-sample per-region dice.
EvalReport evaluate(const SegNetwork& net, const std::vector<Sample>& test_set, float threshold = 0.5f);

// CSV: subset,flair,t1,t1c,t2,dice_complete,dice_core,dice_enhancing with
// 4-decimal values; byte-identical across runs on the same report.
void write_report(const EvalReport& report, const std::string& path);

}  // namespace corrseg
