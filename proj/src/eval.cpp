#include "corrseg/eval.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace corrseg {

std::string ModalitySubset::name() const {
    static const char* kUpper[kNumModalities] = {"FLAIR", "T1", "T1c", "T2"};
    std::string out;
    for (int m = 0; m < kNumModalities; ++m) {
        if (!present[static_cast<size_t>(m)]) continue;
        if (!out.empty()) out += "+";
        out += kUpper[m];
    }
    return out;
}

std::vector<ModalitySubset> enumerate_subsets() {
    // Row order of the reference results table (FLAIR, T1, T1c, T2).
    static const std::array<std::array<bool, 4>, 15> kOrder = {{
        {false, false, false, true},
        {false, false, true, false},
        {false, true, false, false},
        {true, false, false, false},
        {false, false, true, true},
        {false, true, true, false},
        {true, true, false, false},
        {false, true, false, true},
        {true, false, false, true},
        {true, false, true, false},
        {true, true, true, false},
        {true, true, false, true},
        {true, false, true, true},
        {false, true, true, true},
        {true, true, true, true},
    }};
    std::vector<ModalitySubset> out;
    out.reserve(kOrder.size());
    for (const auto& mask : kOrder) out.push_back(ModalitySubset{mask});
    return out;
}

double dice_score(const Tensor& pred_mask, const Tensor& true_mask) {
    if (pred_mask.shape() != true_mask.shape()) {
        throw std::invalid_argument("dice_score: shape mismatch: " + shape_str(pred_mask.shape()) + " vs " +
                                    shape_str(true_mask.shape()));
    }
    int64_t p = 0, t = 0, inter = 0;
    for (int64_t i = 0; i < pred_mask.numel(); ++i) {
        const float pv = pred_mask.data()[i];
        const float tv = true_mask.data()[i];
        if ((pv != 0.0f && pv != 1.0f) || (tv != 0.0f && tv != 1.0f)) {
            throw std::invalid_argument("dice_score: inputs must be binary masks");
        }
        p += pv != 0.0f;
        t += tv != 0.0f;
        inter += (pv != 0.0f && tv != 0.0f);
    }
    if (p + t == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(p + t);
}

double EvalReport::mean_over_subsets() const {
    double s = 0.0;
    for (const EvalRow& r : rows) s += r.mean_dice();
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

EvalReport evaluate(const SegNetwork& net, const std::vector<Sample>& test_set, float threshold) {
    if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
    if (!(threshold > 0.0f && threshold < 1.0f)) {
        throw std::invalid_argument("evaluate: threshold must lie in (0,1)");
    }
    EvalReport report;
    const int S = net.config.input_size;
    const int64_t sp = static_cast<int64_t>(S) * S * S;
    for (const ModalitySubset& subset : enumerate_subsets()) {
        EvalRow row;
        row.subset = subset;
        std::array<double, kNumRegions> acc = {0.0, 0.0, 0.0};
        for (const Sample& sample : test_set) {
            ForwardOutput out = forward(net, sample.volumes, subset.present);
            for (int r = 0; r < kNumRegions; ++r) {
                Tensor pred({1, S, S, S});
                Tensor truth({1, S, S, S});
                for (int64_t i = 0; i < sp; ++i) {
                    pred.data()[i] = out.probs.data()[r * sp + i] >= threshold ? 1.0f : 0.0f;
                    truth.data()[i] = sample.labels.data()[r * sp + i];
                }
                acc[static_cast<size_t>(r)] += dice_score(pred, truth);
            }
        }
        for (int r = 0; r < kNumRegions; ++r) {
            row.dice[static_cast<size_t>(r)] = acc[static_cast<size_t>(r)] / static_cast<double>(test_set.size());
        }
        if (subset.all_present()) report.full_row_index = static_cast<int>(report.rows.size());
        report.rows.push_back(row);
    }
    return report;
}

void write_report(const EvalReport& report, const std::string& path) {
    if (report.rows.size() != 15) {
        throw std::invalid_argument("write_report: expected 15 rows, got " + std::to_string(report.rows.size()));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_report: cannot write " + path);
    out << "# dice = 2|P&T|/(|P|+|T|); empty prediction and truth count as 1.0\n";
    out << "subset,flair,t1,t1c,t2,dice_complete,dice_core,dice_enhancing\n";
    char line[256];
    for (const EvalRow& r : report.rows) {
        std::snprintf(line, sizeof(line), "%s,%d,%d,%d,%d,%.4f,%.4f,%.4f\n", r.subset.name().c_str(),
                      r.subset.present[0] ? 1 : 0, r.subset.present[1] ? 1 : 0, r.subset.present[2] ? 1 : 0,
                      r.subset.present[3] ? 1 : 0, r.dice[0], r.dice[1], r.dice[2]);
        out << line;
    }
    if (!out) throw std::runtime_error("write_report: write failed for " + path);
}

}  // namespace corrseg
