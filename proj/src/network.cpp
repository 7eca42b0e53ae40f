#include "corrseg/network.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace corrseg {

void NetworkConfig::validate() const {
    if (levels < 2 || levels > 6) {
        throw std::invalid_argument("network config: levels must lie in [2,6], got " + std::to_string(levels));
    }
    if (base_channels < 1) {
        throw std::invalid_argument("network config: base_channels must be positive, got " +
                                    std::to_string(base_channels));
    }
    const int down = 1 << (levels - 1);
    if (input_size <= 0 || input_size % down != 0) {
        throw std::invalid_argument("network config: input_size " + std::to_string(input_size) +
                                    " must be divisible by 2^(levels-1) = " + std::to_string(down));
    }
    if (!(leaky_slope > 0.0f && leaky_slope < 1.0f)) {
        throw std::invalid_argument("network config: leaky_slope must lie in (0,1), got " +
                                    std::to_string(leaky_slope));
    }
}

SegNetwork build_network(const NetworkConfig& config, uint64_t seed) {
    config.validate();
    SegNetwork net;
    net.config = config;
    net.seed = seed;
    Rng rng(seed);

    for (int m = 0; m < kNumModalities; ++m) {
        Encoder& enc = net.encoders[static_cast<size_t>(m)];
        int in_ch = 1;
        for (int l = 0; l < config.levels; ++l) {
            EncoderLevel level;
            const int out_ch = config.channels_at(l);
            level.conv = make_conv(in_ch, out_ch, 3, 1, l == 0 ? 1 : 2, rng, /*has_bias=*/false);
            level.res = make_res_dil(out_ch, config.leaky_slope, rng);
            enc.levels.push_back(std::move(level));
            in_ch = out_ch;
        }
    }

    const int bott = config.bottleneck_channels();
    if (config.cr_enabled) {
        for (int m = 0; m < kNumModalities; ++m) net.mpe.push_back(make_mpe(bott, config.leaky_slope, rng));
    }
    net.channel_att = make_channel_attention(kNumModalities * bott, config.leaky_slope, rng);
    net.spatial_att = make_spatial_attention(rng);
    net.bottleneck_head = make_conv(kNumModalities * bott, kNumRegions, 1, 1, 1, rng);

    int up_in = kNumModalities * bott;
    for (int l = config.levels - 2; l >= 0; --l) {
        DecoderLevel dl;
        const int skip_ch = config.channels_at(l);
        dl.reduce = make_conv(up_in, skip_ch, 3, 1, 1, rng, /*has_bias=*/false);
        dl.res = make_res_dil(2 * skip_ch, config.leaky_slope, rng);
        dl.head = make_conv(2 * skip_ch, kNumRegions, 1, 1, 1, rng);
        net.decoder.push_back(std::move(dl));
        up_in = 2 * skip_ch;
    }
    return net;
}

namespace {

void add_conv(std::vector<Parameter>& out, const std::string& prefix, Conv3dLayer& layer) {
    out.push_back({prefix + ".weight", layer.weight});
    if (layer.has_bias) out.push_back({prefix + ".bias", layer.bias});
}

void add_dense(std::vector<Parameter>& out, const std::string& prefix, DenseLayer& layer) {
    out.push_back({prefix + ".weight", layer.weight});
    out.push_back({prefix + ".bias", layer.bias});
}

void add_res(std::vector<Parameter>& out, const std::string& prefix, ResDilBlock& block) {
    add_conv(out, prefix + ".conv_a", block.conv_a);
    add_conv(out, prefix + ".conv_b", block.conv_b);
}

}  // namespace

std::vector<Parameter> collect_parameters(SegNetwork& net) {
    std::vector<Parameter> params;
    for (int m = 0; m < kNumModalities; ++m) {
        const std::string ep = "enc" + std::to_string(m);
        Encoder& enc = net.encoders[static_cast<size_t>(m)];
        for (size_t l = 0; l < enc.levels.size(); ++l) {
            const std::string lp = ep + ".level" + std::to_string(l);
            add_conv(params, lp + ".conv", enc.levels[l].conv);
            add_res(params, lp + ".res", enc.levels[l].res);
        }
    }
    for (size_t m = 0; m < net.mpe.size(); ++m) {
        const std::string mp = "cr.mpe" + std::to_string(m);
        add_dense(params, mp + ".fc1", net.mpe[m].fc1);
        add_dense(params, mp + ".fc2", net.mpe[m].fc2);
    }
    add_dense(params, "fusion.channel.fc1", net.channel_att.fc1);
    add_dense(params, "fusion.channel.fc2", net.channel_att.fc2);
    add_conv(params, "fusion.spatial.conv", net.spatial_att.conv);
    add_conv(params, "heads.bottleneck", net.bottleneck_head);
    for (size_t l = 0; l < net.decoder.size(); ++l) {
        const std::string dp = "dec.level" + std::to_string(l);
        add_conv(params, dp + ".reduce", net.decoder[l].reduce);
        add_res(params, dp + ".res", net.decoder[l].res);
        add_conv(params, dp + ".head", net.decoder[l].head);
    }
    for (Parameter& p : params) p.tensor.set_requires_grad(true);
    return params;
}

int64_t parameter_count(SegNetwork& net) {
    int64_t n = 0;
    for (const Parameter& p : collect_parameters(net)) n += p.tensor.numel();
    return n;
}

Volumes substitute_missing(const Volumes& volumes, const ModalityMask& mask) {
    static constexpr int kPair[kNumModalities] = {3, 2, 1, 0};  // FLAIR<->T2, T1<->T1c
    int present = 0;
    for (bool m : mask) present += m ? 1 : 0;
    if (present == 0) {
        throw std::invalid_argument("substitute_missing: all four modalities are missing");
    }
    int first_available = -1;
    for (int i = 0; i < kNumModalities; ++i) {
        if (mask[static_cast<size_t>(i)]) {
            first_available = i;
            break;
        }
    }
    Volumes out;
    for (int i = 0; i < kNumModalities; ++i) {
        if (mask[static_cast<size_t>(i)]) {
            out[static_cast<size_t>(i)] = volumes[static_cast<size_t>(i)];
        } else if (mask[static_cast<size_t>(kPair[i])]) {
            out[static_cast<size_t>(i)] = volumes[static_cast<size_t>(kPair[i])];
        } else {
            out[static_cast<size_t>(i)] = volumes[static_cast<size_t>(first_available)];
        }
    }
    return out;
}

namespace {

Tensor encoder_level_forward(const EncoderLevel& level, const Tensor& x, float slope, float eps) {
    Tensor h = leaky_relu(instance_norm(level.conv.forward(x), eps), slope);
    return res_dil_forward(h, level.res);
}

}  // namespace

ForwardOutput forward(const SegNetwork& net, const Volumes& volumes, const ModalityMask& mask) {
    const NetworkConfig& cfg = net.config;
    const int S = cfg.input_size;
    for (int m = 0; m < kNumModalities; ++m) {
        const Tensor& v = volumes[static_cast<size_t>(m)];
        if (!v.defined() && !mask[static_cast<size_t>(m)]) continue;
        if (!v.defined() || v.shape() != std::vector<int>{1, S, S, S}) {
            throw std::invalid_argument("forward: modality " + std::string(kModalityNames[m]) + " has shape " +
                                        (v.defined() ? shape_str(v.shape()) : std::string("<undefined>")) +
                                        ", expected [1," + std::to_string(S) + "," + std::to_string(S) + "," +
                                        std::to_string(S) + "]");
        }
    }
    const Volumes inputs = substitute_missing(volumes, mask);

    // Per-modality encoders; skips[m][l] is the res_dil output at level l.
    std::vector<std::vector<Tensor>> skips(kNumModalities);
    std::vector<Tensor> bottleneck(kNumModalities);
    for (int m = 0; m < kNumModalities; ++m) {
        Tensor x = inputs[static_cast<size_t>(m)];
        for (int l = 0; l < cfg.levels; ++l) {
            x = encoder_level_forward(net.encoders[static_cast<size_t>(m)].levels[static_cast<size_t>(l)], x,
                                      cfg.leaky_slope, 1e-5f);
            skips[static_cast<size_t>(m)].push_back(x);
        }
        bottleneck[static_cast<size_t>(m)] = x;
    }

    // Correlation representations at the bottleneck.
    std::vector<Tensor> cr;
    if (cfg.cr_enabled) {
        for (int i = 0; i < kNumModalities; ++i) {
            Gamma g = mpe_forward(bottleneck[static_cast<size_t>(i)], net.mpe[static_cast<size_t>(i)]);
            int others[3], n = 0;
            for (int j = 0; j < kNumModalities; ++j) {
                if (j != i) others[n++] = j;
            }
            cr.push_back(lce_forward(g, bottleneck[static_cast<size_t>(others[0])],
                                     bottleneck[static_cast<size_t>(others[1])],
                                     bottleneck[static_cast<size_t>(others[2])]));
        }
    }
    Tensor fused_in = concat_channels(cfg.cr_enabled ? cr : bottleneck);
    Tensor channel_w = channel_attention_forward(fused_in, net.channel_att);
    Tensor spatial_w = spatial_attention_forward(fused_in, net.spatial_att);
    Tensor f_f = fuse(fused_in, channel_w, spatial_w);

    // Decoder with averaged encoder skips and per-level supervision heads.
    std::vector<Tensor> head_logits;        // deep to shallow
    std::vector<int> head_scale;            // upsample factor to full resolution
    head_logits.push_back(net.bottleneck_head.forward(f_f));
    head_scale.push_back(1 << (cfg.levels - 1));

    Tensor x = f_f;
    for (size_t d = 0; d < net.decoder.size(); ++d) {
        const DecoderLevel& dl = net.decoder[d];
        const int level = cfg.levels - 2 - static_cast<int>(d);
        x = upsample3d(x, 2);
        x = leaky_relu(instance_norm(dl.reduce.forward(x), 1e-5f), cfg.leaky_slope);
        Tensor skip = scale(add(add(skips[0][static_cast<size_t>(level)], skips[1][static_cast<size_t>(level)]),
                                add(skips[2][static_cast<size_t>(level)], skips[3][static_cast<size_t>(level)])),
                            0.25);
        x = concat_channels({x, skip});
        x = res_dil_forward(x, dl.res);
        head_logits.push_back(dl.head.forward(x));
        head_scale.push_back(1 << level);
    }

    ForwardOutput out;
    if (cfg.deep_supervision) {
        Tensor logits;
        for (size_t i = 0; i < head_logits.size(); ++i) {
            Tensor up = head_scale[i] == 1 ? head_logits[i] : upsample3d(head_logits[i], head_scale[i]);
            out.aux.push_back(up);
            logits = i == 0 ? up : add(logits, up);
        }
        out.logits = logits;
    } else {
        out.logits = head_logits.back();
        out.aux.push_back(out.logits);
    }
    out.probs = sigmoid(out.logits);
    out.cr_features = std::move(cr);
    out.encoder_features = std::move(bottleneck);
    return out;
}

std::vector<Tensor> recover_latent(const SegNetwork& net, const Volumes& volumes, const ModalityMask& mask) {
    if (!net.config.cr_enabled) {
        throw std::invalid_argument("recover_latent requires cr_enabled");
    }
    const Volumes inputs = substitute_missing(volumes, mask);
    std::vector<Tensor> bottleneck;
    for (int m = 0; m < kNumModalities; ++m) {
        Tensor x = inputs[static_cast<size_t>(m)];
        for (int l = 0; l < net.config.levels; ++l) {
            x = encoder_level_forward(net.encoders[static_cast<size_t>(m)].levels[static_cast<size_t>(l)], x,
                                      net.config.leaky_slope, 1e-5f);
        }
        bottleneck.push_back(x);
    }
    std::vector<Tensor> recovered;
    for (int i = 0; i < kNumModalities; ++i) {
        Gamma g = mpe_forward(bottleneck[static_cast<size_t>(i)], net.mpe[static_cast<size_t>(i)]);
        int others[3], n = 0;
        for (int j = 0; j < kNumModalities; ++j) {
            if (j != i) others[n++] = j;
        }
        recovered.push_back(lce_forward(g, bottleneck[static_cast<size_t>(others[0])],
                                        bottleneck[static_cast<size_t>(others[1])],
                                        bottleneck[static_cast<size_t>(others[2])]));
    }
    return recovered;
}

namespace {

nlohmann::ordered_json config_to_json(const NetworkConfig& c) {
    nlohmann::ordered_json j;
    j["input_size"] = c.input_size;
    j["levels"] = c.levels;
    j["base_channels"] = c.base_channels;
    j["leaky_slope"] = c.leaky_slope;
    j["cr_enabled"] = c.cr_enabled;
    j["deep_supervision"] = c.deep_supervision;
    return j;
}

NetworkConfig config_from_json(const nlohmann::json& j) {
    NetworkConfig c;
    c.input_size = j.at("input_size").get<int>();
    c.levels = j.at("levels").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.leaky_slope = j.at("leaky_slope").get<float>();
    c.cr_enabled = j.at("cr_enabled").get<bool>();
    c.deep_supervision = j.at("deep_supervision").get<bool>();
    return c;
}

}  // namespace

void save_checkpoint(const SegNetwork& net, const std::string& dir, int epoch) {
    std::filesystem::create_directories(dir);
    auto params = collect_parameters(const_cast<SegNetwork&>(net));
    nlohmann::ordered_json manifest;
    manifest["config"] = config_to_json(net.config);
    manifest["seed"] = net.seed;
    manifest["epoch"] = epoch;
    std::vector<std::string> names;
    for (const Parameter& p : params) names.push_back(p.name);
    manifest["parameters"] = names;
    {
        std::ofstream out(dir + "/manifest.json", std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + dir + "/manifest.json");
        out << manifest.dump(2) << "\n";
    }
    for (const Parameter& p : params) save_tensor(p.tensor, dir + "/" + p.name);
}

SegNetwork load_checkpoint(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::runtime_error("checkpoint not found: " + dir + "/manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(in);
    SegNetwork net = build_network(config_from_json(manifest.at("config")), manifest.at("seed").get<uint64_t>());
    auto params = collect_parameters(net);
    const auto names = manifest.at("parameters").get<std::vector<std::string>>();
    if (names.size() != params.size()) {
        throw std::runtime_error("checkpoint " + dir + ": expected " + std::to_string(params.size()) +
                                 " parameters, manifest lists " + std::to_string(names.size()));
    }
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != names[i]) {
            throw std::runtime_error("checkpoint " + dir + ": parameter order mismatch at " + params[i].name);
        }
        Tensor stored = load_tensor(dir + "/" + params[i].name);
        if (stored.shape() != params[i].tensor.shape()) {
            throw std::runtime_error("checkpoint " + dir + ": shape mismatch for " + params[i].name);
        }
        std::copy(stored.data(), stored.data() + stored.numel(), params[i].tensor.data());
    }
    return net;
}

int checkpoint_epoch(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::runtime_error("checkpoint not found: " + dir + "/manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(in);
    return manifest.at("epoch").get<int>();
}

}  // namespace corrseg
