#include "corrseg/commands.hpp"

#include <cstdio>
#include <filesystem>

#include "corrseg/eval.hpp"
#include "corrseg/gradcheck_suite.hpp"

namespace corrseg {

void run_generate(const RunConfig& cfg, std::ostream& log) {
    const std::string dir = cfg.resolve(cfg.data.dir);
    auto [train_split, test_split] = make_dataset(cfg.phantom_spec(), cfg.data.n_train, cfg.data.n_test, dir);
    log << "generated " << train_split.indices.size() << " train + " << test_split.indices.size()
        << " test samples in " << dir << "\n";
}

void run_train(const RunConfig& cfg, std::ostream& log) {
    const std::string dir = cfg.resolve(cfg.data.dir);
    std::vector<Sample> train_set = load_split(dir, "train");
    log << "loaded " << train_set.size() << " training samples from " << dir << "\n";
    SegNetwork net = build_network(cfg.network, cfg.seed);
    TrainConfig tc = cfg.train_config();
    tc.verbose = true;
    TrainingLog tl = train(net, train_set, tc);
    log << "best epoch " << tl.best_epoch << " total " << tl.best_total << "; checkpoint at " << tc.checkpoint_dir
        << ", log at " << tc.log_csv << "\n";
}

void run_eval(const RunConfig& cfg, std::ostream& log) {
    SegNetwork net = load_checkpoint(cfg.resolve(cfg.training.checkpoint_dir));
    std::vector<Sample> test_set = load_split(cfg.resolve(cfg.data.dir), "test");
    EvalReport report = evaluate(net, test_set, static_cast<float>(cfg.eval.threshold));
    const std::string path = cfg.resolve(cfg.eval.report);
    write_report(report, path);
    log << "evaluated " << test_set.size() << " samples over " << report.rows.size() << " modality subsets\n";
    for (const EvalRow& row : report.rows) {
        char line[160];
        std::snprintf(line, sizeof(line), "  %-18s complete %.4f  core %.4f  enhancing %.4f\n",
                      row.subset.name().c_str(), row.dice[0], row.dice[1], row.dice[2]);
        log << line;
    }
    log << "report written to " << path << "\n";
}

bool run_gradcheck(uint64_t seed, std::ostream& log) {
    bool all_ok = true;
    for (uint64_t s = seed; s < seed + 3; ++s) {
        log << "seed " << s << "\n";
        for (const OpCheck& check : run_gradcheck_suite(s)) {
            char line[160];
            std::snprintf(line, sizeof(line), "  %-28s max_rel %.3e  tol %.1e  %s\n", check.name.c_str(),
                          check.max_error, check.tolerance, check.passed() ? "ok" : "FAIL");
            log << line;
            all_ok &= check.passed();
        }
    }
    return all_ok;
}

}  // namespace corrseg
