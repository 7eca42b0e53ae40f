#pragma once

#include <optional>
#include <string>

#include "corrseg/network.hpp"
#include "corrseg/phantom.hpp"
#include "corrseg/trainer.hpp"

namespace corrseg {

// Merged run configuration. Every key has a documented default; a config
// file only needs the keys it wants to change (plus seed).
struct RunConfig {
    uint64_t seed = 42;
    std::string out_dir = ".";

    struct Data {
        std::string dir = "dataset";
        int size = 32;
        double noise_sigma = 0.05;
        int n_train = 100;
        int n_test = 25;
    } data;

    NetworkConfig network;

    struct Training {
        int epochs = 50;
        double lr = 5e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        int patience = 10;
        double factor = 0.5;
        double min_delta = 1e-6;
        bool modality_dropout = false;
        std::string checkpoint_dir = "checkpoint";
        std::string log_csv = "training_log.csv";
    } training;

    struct Eval {
        double threshold = 0.5;
        std::string report = "report.csv";
    } eval;

    // Throws std::invalid_argument naming the violated constraint.
    void validate() const;

    // Paths from the config resolved under out_dir (absolute paths pass through).
    std::string resolve(const std::string& path) const;

    PhantomSpec phantom_spec() const;
    TrainConfig train_config() const;

    // The fully-resolved configuration in config-file syntax.
    std::string resolved_text() const;
};

// Strict parser for the TOML-style config: unknown sections or keys, type
// mismatches, and malformed lines raise errors naming the key and line.
RunConfig parse_config(const std::string& path);

struct CliOverrides {
    std::optional<uint64_t> seed;
    std::optional<bool> cr_enabled;
    std::optional<std::string> out_dir;
};
void apply_overrides(RunConfig& cfg, const CliOverrides& overrides);

}  // namespace corrseg
