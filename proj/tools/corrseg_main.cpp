#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "corrseg/commands.hpp"

namespace {

corrseg::RunConfig load_config(const std::string& path, const corrseg::CliOverrides& overrides) {
    corrseg::RunConfig cfg = path.empty() ? corrseg::RunConfig{} : corrseg::parse_config(path);
    corrseg::apply_overrides(cfg, overrides);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"corrseg: multi-encoder 3D segmentation with latent correlation fusion"};
    app.require_subcommand(1);

    std::string config_path;
    corrseg::CliOverrides overrides;
    std::string cr_flag;
    uint64_t seed_flag = 0;
    std::string out_flag;

    auto add_common = [&](CLI::App* cmd, bool config_required) {
        auto* c = cmd->add_option("--config", config_path, "configuration file");
        if (config_required) c->required()->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed_flag, "override the config seed")->each([&](const std::string& v) {
            overrides.seed = std::stoull(v);
        });
        cmd->add_option("--cr", cr_flag, "override the CR block switch")
            ->check(CLI::IsMember({"on", "off"}))
            ->each([&](const std::string& v) { overrides.cr_enabled = v == "on"; });
        cmd->add_option("--out", out_flag, "directory for generated artifacts")->each([&](const std::string& v) {
            overrides.out_dir = v;
        });
    };

    CLI::App* generate = app.add_subcommand("generate", "generate the synthetic dataset");
    add_common(generate, true);
    CLI::App* train = app.add_subcommand("train", "train a model on the generated dataset");
    add_common(train, true);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint over all 15 modality subsets");
    add_common(eval, true);
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "run the finite-difference gradient suite");
    add_common(gradcheck, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gradcheck->parsed()) {
            const uint64_t seed = overrides.seed.value_or(1);
            const bool ok = corrseg::run_gradcheck(seed, std::cout);
            std::cout << (ok ? "gradcheck suite: all checks passed\n" : "gradcheck suite: FAILURES\n");
            return ok ? 0 : 1;
        }
        corrseg::RunConfig cfg = load_config(config_path, overrides);
        std::cout << "resolved configuration:\n" << cfg.resolved_text() << "\n";
        if (generate->parsed()) {
            corrseg::run_generate(cfg, std::cout);
        } else if (train->parsed()) {
            corrseg::run_train(cfg, std::cout);
        } else if (eval->parsed()) {
            corrseg::run_eval(cfg, std::cout);
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
