#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "corrseg/network.hpp"
#include "corrseg/tensor.hpp"

namespace corrseg {

// Latent tissue fields, in mixing-matrix column order.
enum LatentField { kLatentBrain = 0, kLatentComplete = 1, kLatentCore = 2, kLatentEnhancing = 3 };

struct PhantomSpec {
    int size = 32;
    uint64_t seed = 42;
    float noise_sigma = 0.05f;

    // mixing[modality][latent]: modality intensity = sum_t mixing[m][t] * latent_t.
    // Default rows make FLAIR/T2 nearly parallel and T1/T1c parallel except
    // on the enhancing field, mirroring the modality pairing.
    // Calibrated against per-sample latent-field covariances: every modality
    // pair clears the correlation floors with wide margin, while the
    // complete-tumor boundary contrast (edema column) lives almost entirely
    // in FLAIR/T2 and the core/enhancing contrasts in T1/T1c, mirroring the
    // modality pairing the substitution rule relies on.
    std::array<std::array<float, 4>, 4> mixing = {{
        {0.93f, 1.00f, 1.15f, 1.15f},     // FLAIR
        {-0.81f, -0.20f, -0.54f, -0.49f}, // T1
        {-0.99f, -0.25f, -0.63f, -0.08f}, // T1c
        {1.15f, 0.83f, 0.90f, 1.04f},     // T2
    }};

    // Region geometry as fractions: brain and complete radii relative to the
    // volume size, core relative to complete, enhancing relative to core.
    float brain_radius_lo = 0.36f, brain_radius_hi = 0.44f;
    float complete_radius_lo = 0.16f, complete_radius_hi = 0.24f;
    float core_frac_lo = 0.55f, core_frac_hi = 0.75f;
    float enh_frac_lo = 0.50f, enh_frac_hi = 0.70f;
    int smooth_passes = 2;  // separable 3-tap box blur applications per axis

    void validate() const;
    uint64_t content_hash() const;
};

struct Sample {
    Volumes volumes;  // FLAIR, T1, T1c, T2
    Tensor labels;    // [3,S,S,S] binary, nested: enhancing <= core <= complete
    uint64_t seed = 0;
    uint64_t spec_hash = 0;
};

// Deterministic in (spec.seed, index). Throws after 100 failed attempts to
// nest the tumor inside the brain at the requested radii.
Sample generate_sample(const PhantomSpec& spec, int index);

// Same construction, additionally exposing the binary brain mask (used by
// the correlation diagnostics and tests).
Sample generate_sample_debug(const PhantomSpec& spec, int index, Tensor* brain_mask_out);

struct DatasetManifest {
    std::vector<int> indices;
    std::vector<std::string> sample_dirs;  // relative to the dataset dir
};

// Writes sample_<idx>/{flair,t1,t1c,t2,labels}.bin/.json plus manifest.json;
// train indices [0, n_train), test [n_train, n_train+n_test).
std::pair<DatasetManifest, DatasetManifest> make_dataset(const PhantomSpec& spec, int n_train, int n_test,
                                                         const std::string& dir);

Sample load_sample(const std::string& sample_dir);
std::vector<Sample> load_split(const std::string& dataset_dir, const std::string& split);

// Pearson correlation between two volumes over the voxels where mask != 0.
double masked_correlation(const Tensor& a, const Tensor& b, const Tensor& mask);

}  // namespace corrseg
