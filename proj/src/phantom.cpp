#include "corrseg/phantom.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "corrseg/rng.hpp"

namespace corrseg {

namespace {

// Smallest singular value of a 4x4 matrix via Jacobi iteration on M^T M.
double smallest_singular_value(const std::array<std::array<float, 4>, 4>& m) {
    double a[4][4] = {};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) a[i][j] += static_cast<double>(m[static_cast<size_t>(k)][static_cast<size_t>(i)]) *
                                                   m[static_cast<size_t>(k)][static_cast<size_t>(j)];
    for (int sweep = 0; sweep < 32; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < 4; ++p)
            for (int q = p + 1; q < 4; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-24) break;
        for (int p = 0; p < 4; ++p) {
            for (int q = p + 1; q < 4; ++q) {
                if (std::abs(a[p][q]) < 1e-18) continue;
                const double theta = 0.5 * std::atan2(2.0 * a[p][q], a[q][q] - a[p][p]);
                const double c = std::cos(theta), s = std::sin(theta);
                for (int k = 0; k < 4; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 4; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    double min_eig = a[0][0];
    for (int i = 1; i < 4; ++i) min_eig = std::min(min_eig, a[i][i]);
    return std::sqrt(std::max(min_eig, 0.0));
}

struct Ellipsoid {
    double cx, cy, cz;
    double rx, ry, rz;

    bool contains(double x, double y, double z) const {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry, dz = (z - cz) / rz;
        return dx * dx + dy * dy + dz * dz <= 1.0;
    }
};

// Sufficient containment test in the outer ellipsoid's normalized frame:
// ||center offset|| plus the largest radius ratio must stay below 1.
bool nests_inside(const Ellipsoid& inner, const Ellipsoid& outer, double margin) {
    const double ox = (inner.cx - outer.cx) / outer.rx;
    const double oy = (inner.cy - outer.cy) / outer.ry;
    const double oz = (inner.cz - outer.cz) / outer.rz;
    const double off = std::sqrt(ox * ox + oy * oy + oz * oz);
    const double ratio = std::max({inner.rx / outer.rx, inner.ry / outer.ry, inner.rz / outer.rz});
    return off + ratio <= 1.0 - margin;
}

void rasterize(const Ellipsoid& e, int size, std::vector<float>& out) {
    out.assign(static_cast<size_t>(size) * size * size, 0.0f);
    for (int z = 0; z < size; ++z)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                if (e.contains(x, y, z)) out[(static_cast<size_t>(z) * size + y) * size + x] = 1.0f;
}

// In-place separable 3-tap box blur with clamped boundaries.
void smooth_field(std::vector<float>& f, int size, int passes) {
    std::vector<float> tmp(f.size());
    auto idx = [size](int z, int y, int x) { return (static_cast<size_t>(z) * size + y) * size + x; };
    for (int pass = 0; pass < passes; ++pass) {
        for (int axis = 0; axis < 3; ++axis) {
            for (int z = 0; z < size; ++z) {
                for (int y = 0; y < size; ++y) {
                    for (int x = 0; x < size; ++x) {
                        float sum;
                        if (axis == 0) {
                            sum = f[idx(std::max(0, z - 1), y, x)] + f[idx(z, y, x)] +
                                  f[idx(std::min(size - 1, z + 1), y, x)];
                        } else if (axis == 1) {
                            sum = f[idx(z, std::max(0, y - 1), x)] + f[idx(z, y, x)] +
                                  f[idx(z, std::min(size - 1, y + 1), x)];
                        } else {
                            sum = f[idx(z, y, std::max(0, x - 1))] + f[idx(z, y, x)] +
                                  f[idx(z, y, std::min(size - 1, x + 1))];
                        }
                        tmp[idx(z, y, x)] = sum / 3.0f;
                    }
                }
            }
            f.swap(tmp);
        }
    }
}

}  // namespace

void PhantomSpec::validate() const {
    if (size < 8) throw std::invalid_argument("phantom: size must be >= 8, got " + std::to_string(size));
    if (noise_sigma < 0.0f) throw std::invalid_argument("phantom: noise_sigma must be >= 0");
    if (!(brain_radius_lo <= brain_radius_hi && brain_radius_hi < 0.5f)) {
        throw std::invalid_argument("phantom: brain radius range invalid");
    }
    if (!(complete_radius_lo <= complete_radius_hi && complete_radius_hi < brain_radius_lo)) {
        throw std::invalid_argument("phantom: complete-tumor radius range must sit below the brain radius range");
    }
    if (!(core_frac_lo <= core_frac_hi && core_frac_hi < 1.0f && enh_frac_lo <= enh_frac_hi && enh_frac_hi < 1.0f)) {
        throw std::invalid_argument("phantom: region fractions must keep enhancing < core < complete");
    }
    const double sv = smallest_singular_value(mixing);
    if (sv <= 0.1) {
        std::ostringstream os;
        os << "phantom: mixing matrix ill-conditioned, smallest singular value " << sv << " <= 0.1";
        throw std::invalid_argument(os.str());
    }
}

uint64_t PhantomSpec::content_hash() const {
    std::ostringstream os;
    os << size << "|" << seed << "|" << noise_sigma << "|" << brain_radius_lo << "," << brain_radius_hi << "|"
       << complete_radius_lo << "," << complete_radius_hi << "|" << core_frac_lo << "," << core_frac_hi << "|"
       << enh_frac_lo << "," << enh_frac_hi << "|" << smooth_passes << "|";
    for (const auto& row : mixing)
        for (float v : row) os << v << ",";
    const std::string s = os.str();
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

Sample generate_sample_debug(const PhantomSpec& spec, int index, Tensor* brain_mask_out) {
    spec.validate();
    const int S = spec.size;
    Rng rng(hash_combine(spec.seed, static_cast<uint64_t>(index) + 1));

    const double mid = 0.5 * (S - 1);
    Ellipsoid brain;
    brain.cx = mid + rng.uniform(-0.02, 0.02) * S;
    brain.cy = mid + rng.uniform(-0.02, 0.02) * S;
    brain.cz = mid + rng.uniform(-0.02, 0.02) * S;
    brain.rx = rng.uniform(spec.brain_radius_lo, spec.brain_radius_hi) * S;
    brain.ry = rng.uniform(spec.brain_radius_lo, spec.brain_radius_hi) * S;
    brain.rz = rng.uniform(spec.brain_radius_lo, spec.brain_radius_hi) * S;

    Ellipsoid complete{}, core{}, enh{};
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        complete.rx = rng.uniform(spec.complete_radius_lo, spec.complete_radius_hi) * S;
        complete.ry = rng.uniform(spec.complete_radius_lo, spec.complete_radius_hi) * S;
        complete.rz = rng.uniform(spec.complete_radius_lo, spec.complete_radius_hi) * S;
        // offset inside the brain, in its normalized frame
        const double max_ratio = std::max({complete.rx / brain.rx, complete.ry / brain.ry, complete.rz / brain.rz});
        const double budget = std::max(0.0, 1.0 - max_ratio - 0.05);
        complete.cx = brain.cx + rng.uniform(-budget, budget) * brain.rx * 0.7;
        complete.cy = brain.cy + rng.uniform(-budget, budget) * brain.ry * 0.7;
        complete.cz = brain.cz + rng.uniform(-budget, budget) * brain.rz * 0.7;

        auto place_inside = [&rng](const Ellipsoid& outer, double frac_lo, double frac_hi) {
            Ellipsoid in;
            in.rx = outer.rx * rng.uniform(frac_lo, frac_hi);
            in.ry = outer.ry * rng.uniform(frac_lo, frac_hi);
            in.rz = outer.rz * rng.uniform(frac_lo, frac_hi);
            const double ratio = std::max({in.rx / outer.rx, in.ry / outer.ry, in.rz / outer.rz});
            const double budget2 = std::max(0.0, 1.0 - ratio - 0.05);
            in.cx = outer.cx + rng.uniform(-budget2, budget2) * outer.rx / 1.7320508;
            in.cy = outer.cy + rng.uniform(-budget2, budget2) * outer.ry / 1.7320508;
            in.cz = outer.cz + rng.uniform(-budget2, budget2) * outer.rz / 1.7320508;
            return in;
        };
        core = place_inside(complete, spec.core_frac_lo, spec.core_frac_hi);
        enh = place_inside(core, spec.enh_frac_lo, spec.enh_frac_hi);

        placed = nests_inside(complete, brain, 0.02) && nests_inside(core, complete, 0.0) &&
                 nests_inside(enh, core, 0.0) && enh.rx >= 0.75 && enh.ry >= 0.75 && enh.rz >= 0.75;
    }
    if (!placed) {
        throw std::runtime_error("phantom: could not nest tumor regions within the brain after 100 attempts");
    }

    // Latent fields: nested binary indicators softened by a box blur.
    std::vector<std::vector<float>> latents(4);
    rasterize(brain, S, latents[kLatentBrain]);
    rasterize(complete, S, latents[kLatentComplete]);
    rasterize(core, S, latents[kLatentCore]);
    rasterize(enh, S, latents[kLatentEnhancing]);

    Sample sample;
    sample.seed = spec.seed;
    sample.spec_hash = spec.content_hash();
    sample.labels = Tensor({3, S, S, S});
    const int64_t sp = static_cast<int64_t>(S) * S * S;
    for (int64_t i = 0; i < sp; ++i) {
        sample.labels.data()[0 * sp + i] = latents[kLatentComplete][static_cast<size_t>(i)];
        sample.labels.data()[1 * sp + i] = latents[kLatentCore][static_cast<size_t>(i)];
        sample.labels.data()[2 * sp + i] = latents[kLatentEnhancing][static_cast<size_t>(i)];
    }
    if (brain_mask_out) {
        *brain_mask_out = Tensor({1, S, S, S}, latents[kLatentBrain]);
    }

    for (auto& f : latents) smooth_field(f, S, spec.smooth_passes);

    for (int m = 0; m < kNumModalities; ++m) {
        Tensor vol({1, S, S, S});
        float* v = vol.data();
        for (int64_t i = 0; i < sp; ++i) {
            double acc = 0.0;
            for (int t = 0; t < 4; ++t) {
                acc += static_cast<double>(spec.mixing[static_cast<size_t>(m)][static_cast<size_t>(t)]) *
                       latents[static_cast<size_t>(t)][static_cast<size_t>(i)];
            }
            if (spec.noise_sigma > 0.0f) acc += spec.noise_sigma * rng.normal();
            v[i] = static_cast<float>(acc);
        }
        // per-volume intensity normalization to zero mean, unit variance
        double sum = 0.0, sq = 0.0;
        for (int64_t i = 0; i < sp; ++i) {
            sum += v[i];
            sq += static_cast<double>(v[i]) * v[i];
        }
        const double mean = sum / static_cast<double>(sp);
        const double var = sq / static_cast<double>(sp) - mean * mean;
        const double istd = 1.0 / std::sqrt(std::max(var, 1e-12));
        for (int64_t i = 0; i < sp; ++i) v[i] = static_cast<float>((v[i] - mean) * istd);
        sample.volumes[static_cast<size_t>(m)] = vol;
    }
    return sample;
}

Sample generate_sample(const PhantomSpec& spec, int index) { return generate_sample_debug(spec, index, nullptr); }

namespace {

nlohmann::ordered_json spec_to_json(const PhantomSpec& s) {
    nlohmann::ordered_json j;
    j["size"] = s.size;
    j["seed"] = s.seed;
    j["noise_sigma"] = s.noise_sigma;
    j["mixing"] = s.mixing;
    j["brain_radius"] = {s.brain_radius_lo, s.brain_radius_hi};
    j["complete_radius"] = {s.complete_radius_lo, s.complete_radius_hi};
    j["core_frac"] = {s.core_frac_lo, s.core_frac_hi};
    j["enh_frac"] = {s.enh_frac_lo, s.enh_frac_hi};
    j["smooth_passes"] = s.smooth_passes;
    j["hash"] = s.content_hash();
    return j;
}

}  // namespace

std::pair<DatasetManifest, DatasetManifest> make_dataset(const PhantomSpec& spec, int n_train, int n_test,
                                                         const std::string& dir) {
    if (n_train <= 0 || n_test <= 0) {
        throw std::invalid_argument("make_dataset: n_train and n_test must be positive");
    }
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("make_dataset: cannot create " + dir + ": " + ec.message());

    DatasetManifest train, test;
    for (int idx = 0; idx < n_train + n_test; ++idx) {
        Sample s = generate_sample(spec, idx);
        const std::string rel = "sample_" + std::to_string(idx);
        const std::string sdir = dir + "/" + rel;
        std::filesystem::create_directories(sdir, ec);
        if (ec) throw std::runtime_error("make_dataset: cannot create " + sdir + ": " + ec.message());
        for (int m = 0; m < kNumModalities; ++m) {
            save_tensor(s.volumes[static_cast<size_t>(m)], sdir + "/" + kModalityNames[m]);
        }
        save_tensor(s.labels, sdir + "/labels");
        DatasetManifest& split = idx < n_train ? train : test;
        split.indices.push_back(idx);
        split.sample_dirs.push_back(rel);
    }

    nlohmann::ordered_json manifest;
    manifest["spec"] = spec_to_json(spec);
    manifest["n_train"] = n_train;
    manifest["n_test"] = n_test;
    manifest["train_indices"] = train.indices;
    manifest["test_indices"] = test.indices;
    std::ofstream out(dir + "/manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("make_dataset: cannot write " + dir + "/manifest.json");
    out << manifest.dump(2) << "\n";
    return {train, test};
}

Sample load_sample(const std::string& sample_dir) {
    Sample s;
    for (int m = 0; m < kNumModalities; ++m) {
        s.volumes[static_cast<size_t>(m)] = load_tensor(sample_dir + "/" + kModalityNames[m]);
    }
    s.labels = load_tensor(sample_dir + "/labels");
    return s;
}

std::vector<Sample> load_split(const std::string& dataset_dir, const std::string& split) {
    std::ifstream in(dataset_dir + "/manifest.json");
    if (!in) throw std::runtime_error("dataset manifest not found: " + dataset_dir + "/manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(in);
    const std::string key = split + "_indices";
    if (!manifest.contains(key)) throw std::runtime_error("dataset manifest has no split '" + split + "'");
    std::vector<Sample> out;
    for (int idx : manifest.at(key).get<std::vector<int>>()) {
        out.push_back(load_sample(dataset_dir + "/sample_" + std::to_string(idx)));
    }
    return out;
}

double masked_correlation(const Tensor& a, const Tensor& b, const Tensor& mask) {
    if (a.numel() != b.numel() || a.numel() != mask.numel()) {
        throw std::invalid_argument("masked_correlation: size mismatch");
    }
    double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
    int64_t n = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        if (mask.data()[i] == 0.0f) continue;
        const double x = a.data()[i], y = b.data()[i];
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
        ++n;
    }
    if (n < 2) return 0.0;
    const double cov = sab / n - (sa / n) * (sb / n);
    const double va = saa / n - (sa / n) * (sa / n);
    const double vb = sbb / n - (sb / n) * (sb / n);
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

}  // namespace corrseg
