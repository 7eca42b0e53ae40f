#include "corrseg/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "corrseg/losses.hpp"
#include "corrseg/rng.hpp"
#include "corrseg/tape.hpp"

namespace corrseg {

LossBreakdown train_step(SegNetwork& net, std::vector<Parameter>& params, Adam& opt, const Sample& sample,
                         const ModalityMask& mask) {
    TapeScope scope;
    ForwardOutput out = forward(net, sample.volumes, mask);
    Tensor dice = soft_dice_loss(out.probs, sample.labels);
    Tensor total = dice;
    LossBreakdown breakdown;
    breakdown.dice = dice.item_f64();
    if (!out.cr_features.empty()) {
        Tensor l1 = correlation_l1_loss(out.cr_features, out.encoder_features);
        breakdown.l1 = l1.item_f64();
        total = add(dice, l1);
    }
    breakdown.total = total.item_f64();
    scope.backward(total);
    opt.step(params);
    for (Parameter& p : params) p.tensor.zero_grad();
    return breakdown;
}

TrainingLog train(SegNetwork& net, const std::vector<Sample>& dataset, const TrainConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");

    auto params = collect_parameters(net);
    Adam opt(cfg.adam);
    PlateauSchedule schedule;
    schedule.factor = cfg.plateau_factor;
    schedule.patience = cfg.plateau_patience;
    schedule.min_delta = cfg.plateau_min_delta;

    Rng rng(hash_combine(cfg.seed, 0x7261696eull));
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), size_t{0});

    TrainingLog log;
    double best_total = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<size_t>(rng.next_below(i))]);
        }
        double sum_total = 0.0, sum_dice = 0.0, sum_l1 = 0.0;
        for (size_t k = 0; k < order.size(); ++k) {
            ModalityMask mask = {true, true, true, true};
            if (cfg.modality_dropout) {
                int present = 0;
                for (int m = 0; m < kNumModalities; ++m) {
                    mask[static_cast<size_t>(m)] = rng.uniform() >= 0.25;
                    present += mask[static_cast<size_t>(m)];
                }
                if (present == 0) mask[rng.next_below(kNumModalities)] = true;
            }
            LossBreakdown lb = train_step(net, params, opt, dataset[order[k]], mask);
            if (!std::isfinite(lb.total)) {
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                         std::to_string(order[k]));
            }
            sum_total += lb.total;
            sum_dice += lb.dice;
            sum_l1 += lb.l1;
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.total = sum_total / static_cast<double>(dataset.size());
        stats.dice = sum_dice / static_cast<double>(dataset.size());
        stats.l1 = sum_l1 / static_cast<double>(dataset.size());
        stats.lr = opt.lr();
        log.epochs.push_back(stats);
        if (cfg.verbose) {
            std::fprintf(stderr, "epoch %3d  total %.5f  dice %.5f  l1 %.5f  lr %.2e\n", epoch, stats.total,
                         stats.dice, stats.l1, stats.lr);
        }
        if (stats.total < best_total) {
            best_total = stats.total;
            log.best_epoch = epoch;
            log.best_total = stats.total;
            if (!cfg.checkpoint_dir.empty()) save_checkpoint(net, cfg.checkpoint_dir, epoch);
        }
        schedule.update(stats.total, opt);
    }

    if (!cfg.log_csv.empty()) {
        std::ofstream out(cfg.log_csv, std::ios::trunc);
        if (!out) throw std::runtime_error("train: cannot write " + cfg.log_csv);
        out << "epoch,total,dice,l1,lr\n";
        char line[160];
        for (const EpochStats& e : log.epochs) {
            std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f,%.6e\n", e.epoch, e.total, e.dice, e.l1, e.lr);
            out << line;
        }
    }
    return log;
}

}  // namespace corrseg
