#pragma once

#include <array>
#include <string>
#include <vector>

#include "corrseg/blocks.hpp"

namespace corrseg {

// Modality order is fixed throughout: FLAIR=0, T1=1, T1c=2, T2=3.
inline constexpr int kNumModalities = 4;
inline constexpr int kNumRegions = 3;
inline constexpr const char* kModalityNames[kNumModalities] = {"flair", "t1", "t1c", "t2"};

struct NetworkConfig {
    int input_size = 32;
    int levels = 3;
    int base_channels = 8;
    float leaky_slope = 0.01f;
    bool cr_enabled = true;
    bool deep_supervision = true;

    // Throws std::invalid_argument naming the violated constraint.
    void validate() const;

    int channels_at(int level) const { return base_channels << level; }
    int bottleneck_channels() const { return channels_at(levels - 1); }
};

struct EncoderLevel {
    Conv3dLayer conv;  // stride 1 at level 0, stride 2 below
    ResDilBlock res;
};

struct Encoder {
    std::vector<EncoderLevel> levels;
};

struct DecoderLevel {
    Conv3dLayer reduce;  // post-upsample channel reduction to the skip width
    ResDilBlock res;     // applied after concatenation with the skip
    Conv3dLayer head;    // 1x1x1 supervision head -> n_regions
};

struct SegNetwork {
    NetworkConfig config;
    uint64_t seed = 0;
    std::array<Encoder, kNumModalities> encoders;  // identical shapes, independent parameters
    std::vector<MpeModule> mpe;                    // one per modality when cr_enabled
    ChannelAttention channel_att;
    SpatialAttention spatial_att;
    Conv3dLayer bottleneck_head;                   // 1x1x1 on the fused representation
    std::vector<DecoderLevel> decoder;             // deep to shallow, levels-1 entries
};

struct Parameter {
    std::string name;
    Tensor tensor;
};

struct ForwardOutput {
    Tensor logits;                         // [n_regions, S, S, S]
    Tensor probs;                          // sigmoid(logits)
    std::vector<Tensor> aux;               // per-level logits; length == levels with deep supervision, else 1
    std::vector<Tensor> cr_features;       // F_i per modality (empty when cr disabled)
    std::vector<Tensor> encoder_features;  // bottleneck f_i per modality
};

using Volumes = std::array<Tensor, kNumModalities>;
using ModalityMask = std::array<bool, kNumModalities>;

SegNetwork build_network(const NetworkConfig& config, uint64_t seed);

// Named handles onto the live parameter tensors (shared storage), marked
// requires_grad. Names are unique and stable across builds of one config.
std::vector<Parameter> collect_parameters(SegNetwork& net);
int64_t parameter_count(SegNetwork& net);

// Fills missing slots with the most similar available modality:
// FLAIR<->T2 and T1<->T1c, falling back to the first available in
// (FLAIR, T1, T1c, T2) order when the paired modality is missing too.
Volumes substitute_missing(const Volumes& volumes, const ModalityMask& mask);

ForwardOutput forward(const SegNetwork& net, const Volumes& volumes, const ModalityMask& mask);

// Diagnostic: the CR block's reconstruction F_i of each modality's bottleneck
// features from the other three. Requires cr_enabled.
std::vector<Tensor> recover_latent(const SegNetwork& net, const Volumes& volumes, const ModalityMask& mask);

// Checkpoint: directory of per-parameter tensor files plus manifest.json
// {config, parameter names, seed, epoch}.
void save_checkpoint(const SegNetwork& net, const std::string& dir, int epoch);
SegNetwork load_checkpoint(const std::string& dir);
int checkpoint_epoch(const std::string& dir);

}  // namespace corrseg
