#include "corrseg/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace corrseg {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct KeyValue {
    std::string section;
    std::string key;
    std::string value;
    int line;
};

[[noreturn]] void fail(const KeyValue& kv, const std::string& what) {
    const std::string path = kv.section.empty() ? kv.key : kv.section + "." + kv.key;
    throw std::invalid_argument("config: " + what + " for key '" + path + "' (line " + std::to_string(kv.line) + ")");
}

int64_t parse_int(const KeyValue& kv) {
    try {
        size_t pos = 0;
        int64_t v = std::stoll(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        fail(kv, "expected an integer, got '" + kv.value + "'");
    }
}

double parse_float(const KeyValue& kv) {
    try {
        size_t pos = 0;
        double v = std::stod(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        fail(kv, "expected a number, got '" + kv.value + "'");
    }
}

bool parse_bool(const KeyValue& kv) {
    if (kv.value == "true" || kv.value == "on") return true;
    if (kv.value == "false" || kv.value == "off") return false;
    fail(kv, "expected true/false, got '" + kv.value + "'");
}

std::string parse_string(const KeyValue& kv) {
    std::string v = kv.value;
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
    return v;
}

}  // namespace

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config file not found: " + path);

    RunConfig cfg;
    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::invalid_argument("config: malformed section header at line " + std::to_string(lineno));
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section != "data" && section != "network" && section != "training" && section != "eval") {
                throw std::invalid_argument("config: unknown section '[" + section + "]' (line " +
                                            std::to_string(lineno) + ")");
            }
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: expected 'key = value' at line " + std::to_string(lineno));
        }
        KeyValue kv{section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
        if (kv.key.empty()) fail(kv, "empty key");

        if (section.empty()) {
            if (kv.key == "seed") cfg.seed = static_cast<uint64_t>(parse_int(kv));
            else if (kv.key == "out_dir") cfg.out_dir = parse_string(kv);
            else fail(kv, "unknown key");
        } else if (section == "data") {
            if (kv.key == "dir") cfg.data.dir = parse_string(kv);
            else if (kv.key == "size") cfg.data.size = static_cast<int>(parse_int(kv));
            else if (kv.key == "noise_sigma") cfg.data.noise_sigma = parse_float(kv);
            else if (kv.key == "n_train") cfg.data.n_train = static_cast<int>(parse_int(kv));
            else if (kv.key == "n_test") cfg.data.n_test = static_cast<int>(parse_int(kv));
            else fail(kv, "unknown key");
        } else if (section == "network") {
            if (kv.key == "input_size") cfg.network.input_size = static_cast<int>(parse_int(kv));
            else if (kv.key == "levels") cfg.network.levels = static_cast<int>(parse_int(kv));
            else if (kv.key == "base_channels") cfg.network.base_channels = static_cast<int>(parse_int(kv));
            else if (kv.key == "leaky_slope") cfg.network.leaky_slope = static_cast<float>(parse_float(kv));
            else if (kv.key == "cr_enabled") cfg.network.cr_enabled = parse_bool(kv);
            else if (kv.key == "deep_supervision") cfg.network.deep_supervision = parse_bool(kv);
            else fail(kv, "unknown key");
        } else if (section == "training") {
            if (kv.key == "epochs") cfg.training.epochs = static_cast<int>(parse_int(kv));
            else if (kv.key == "lr") cfg.training.lr = parse_float(kv);
            else if (kv.key == "beta1") cfg.training.beta1 = parse_float(kv);
            else if (kv.key == "beta2") cfg.training.beta2 = parse_float(kv);
            else if (kv.key == "eps") cfg.training.eps = parse_float(kv);
            else if (kv.key == "patience") cfg.training.patience = static_cast<int>(parse_int(kv));
            else if (kv.key == "factor") cfg.training.factor = parse_float(kv);
            else if (kv.key == "min_delta") cfg.training.min_delta = parse_float(kv);
            else if (kv.key == "modality_dropout") cfg.training.modality_dropout = parse_bool(kv);
            else if (kv.key == "checkpoint_dir") cfg.training.checkpoint_dir = parse_string(kv);
            else if (kv.key == "log_csv") cfg.training.log_csv = parse_string(kv);
            else fail(kv, "unknown key");
        } else if (section == "eval") {
            if (kv.key == "threshold") cfg.eval.threshold = parse_float(kv);
            else if (kv.key == "report") cfg.eval.report = parse_string(kv);
            else fail(kv, "unknown key");
        }
    }
    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    network.validate();
    if (data.size != network.input_size) {
        throw std::invalid_argument("config: data.size " + std::to_string(data.size) +
                                    " must equal network.input_size " + std::to_string(network.input_size));
    }
    if (data.n_train <= 0 || data.n_test <= 0) {
        throw std::invalid_argument("config: data.n_train and data.n_test must be positive");
    }
    if (data.noise_sigma < 0.0) throw std::invalid_argument("config: data.noise_sigma must be >= 0");
    if (training.epochs <= 0) throw std::invalid_argument("config: training.epochs must be positive");
    if (!(training.lr > 0.0)) throw std::invalid_argument("config: training.lr must be positive");
    if (training.patience < 1) throw std::invalid_argument("config: training.patience must be >= 1");
    if (!(training.factor > 0.0 && training.factor < 1.0)) {
        throw std::invalid_argument("config: training.factor must lie in (0,1)");
    }
    if (!(eval.threshold > 0.0 && eval.threshold < 1.0)) {
        throw std::invalid_argument("config: eval.threshold must lie in (0,1)");
    }
}

std::string RunConfig::resolve(const std::string& path) const {
    if (path.empty() || path.front() == '/') return path;
    if (out_dir.empty() || out_dir == ".") return path;
    return out_dir + "/" + path;
}

PhantomSpec RunConfig::phantom_spec() const {
    PhantomSpec spec;
    spec.size = data.size;
    spec.seed = seed;
    spec.noise_sigma = static_cast<float>(data.noise_sigma);
    return spec;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig tc;
    tc.epochs = training.epochs;
    tc.seed = seed;
    tc.adam.lr = static_cast<float>(training.lr);
    tc.adam.beta1 = static_cast<float>(training.beta1);
    tc.adam.beta2 = static_cast<float>(training.beta2);
    tc.adam.eps = static_cast<float>(training.eps);
    tc.plateau_factor = training.factor;
    tc.plateau_patience = training.patience;
    tc.plateau_min_delta = training.min_delta;
    tc.modality_dropout = training.modality_dropout;
    tc.checkpoint_dir = resolve(training.checkpoint_dir);
    tc.log_csv = resolve(training.log_csv);
    return tc;
}

std::string RunConfig::resolved_text() const {
    std::ostringstream os;
    os << "seed = " << seed << "\n";
    os << "out_dir = \"" << out_dir << "\"\n";
    os << "[data]\n";
    os << "dir = \"" << data.dir << "\"\n";
    os << "size = " << data.size << "\n";
    os << "noise_sigma = " << data.noise_sigma << "\n";
    os << "n_train = " << data.n_train << "\n";
    os << "n_test = " << data.n_test << "\n";
    os << "[network]\n";
    os << "input_size = " << network.input_size << "\n";
    os << "levels = " << network.levels << "\n";
    os << "base_channels = " << network.base_channels << "\n";
    os << "leaky_slope = " << network.leaky_slope << "\n";
    os << "cr_enabled = " << (network.cr_enabled ? "true" : "false") << "\n";
    os << "deep_supervision = " << (network.deep_supervision ? "true" : "false") << "\n";
    os << "[training]\n";
    os << "epochs = " << training.epochs << "\n";
    os << "lr = " << training.lr << "\n";
    os << "beta1 = " << training.beta1 << "\n";
    os << "beta2 = " << training.beta2 << "\n";
    os << "eps = " << training.eps << "\n";
    os << "patience = " << training.patience << "\n";
    os << "factor = " << training.factor << "\n";
    os << "min_delta = " << training.min_delta << "\n";
    os << "modality_dropout = " << (training.modality_dropout ? "true" : "false") << "\n";
    os << "checkpoint_dir = \"" << training.checkpoint_dir << "\"\n";
    os << "log_csv = \"" << training.log_csv << "\"\n";
    os << "[eval]\n";
    os << "threshold = " << eval.threshold << "\n";
    os << "report = \"" << eval.report << "\"\n";
    return os.str();
}

void apply_overrides(RunConfig& cfg, const CliOverrides& overrides) {
    if (overrides.seed) cfg.seed = *overrides.seed;
    if (overrides.cr_enabled) cfg.network.cr_enabled = *overrides.cr_enabled;
    if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
    cfg.validate();
}

}  // namespace corrseg
