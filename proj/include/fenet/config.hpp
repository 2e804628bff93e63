#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "fenet/data.hpp"
#include "fenet/errors.hpp"
#include "fenet/model.hpp"

namespace fenet {

// Declared default pairing of backbone paradigm to temporal layer kind.
inline TemporalKind default_temporal_for(Paradigm p) {
    switch (p) {
        case Paradigm::Full3D: return TemporalKind::Recurrent;
        case Paradigm::Mixed2D3D: return TemporalKind::Recurrent;
        case Paradigm::Factorized2Plus1D: return TemporalKind::TransformerEncoder;
        case Paradigm::WindowAttention: return TemporalKind::LinearProjection;
    }
    return TemporalKind::LinearProjection;
}

struct DataConfig {
    SynthSpec synth;
    std::size_t target_rgb_size = 0;  // 0 = keep native size
    std::size_t target_rdm_size = 0;
};

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 4;
    double base_lr = 1e-3;
    double min_lr = 0.0;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (min_lr < 0.0 || min_lr > base_lr) {
            throw ConfigError("train: need 0 <= min_lr <= base_lr");
        }
    }
};

// One self-describing JSON document per experiment. Every source of
// randomness fans out from the single seed.
struct RunConfig {
    ModelConfig model;
    DataConfig data;
    TrainConfig train;
    std::uint64_t seed = 42;
};

namespace detail {

inline void parse_stream(const nlohmann::json& j, StreamSpec& s) {
    s.paradigm = parse_paradigm(j.at("paradigm").get<std::string>());
    if (j.contains("temporal")) {
        s.temporal_kind = parse_temporal_kind(j.at("temporal").get<std::string>());
    } else {
        s.temporal_kind = default_temporal_for(s.paradigm);
    }
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    if (j.contains("channels")) {
        const auto c = j.at("channels").get<std::vector<std::size_t>>();
        if (c.size() != 2) throw ConfigError("stream.channels: want two block widths");
        s.channels = {c[0], c[1]};
    }
    s.patch_size = j.value("patch_size", s.patch_size);
    s.embed_dim = j.value("embed_dim", s.embed_dim);
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig cfg;
    cfg.model.streams = default_streams();
    try {
        cfg.seed = j.value("seed", cfg.seed);

        if (j.contains("data")) {
            const auto& d = j.at("data");
            cfg.data.synth.classes = d.value("classes", cfg.data.synth.classes);
            cfg.data.synth.frames = d.value("frames", cfg.data.synth.frames);
            cfg.data.synth.rgb_size = d.value("rgb_size", cfg.data.synth.rgb_size);
            cfg.data.synth.rdm_size = d.value("rdm_size", cfg.data.synth.rdm_size);
            cfg.data.synth.train_per_class =
                d.value("train_per_class", cfg.data.synth.train_per_class);
            cfg.data.synth.valid_per_class =
                d.value("valid_per_class", cfg.data.synth.valid_per_class);
            cfg.data.synth.test_per_class =
                d.value("test_per_class", cfg.data.synth.test_per_class);
            cfg.data.synth.noise_sigma = d.value("noise_sigma", cfg.data.synth.noise_sigma);
            cfg.data.target_rgb_size = d.value("target_rgb_size", std::size_t(0));
            cfg.data.target_rdm_size = d.value("target_rdm_size", std::size_t(0));
        }
        cfg.data.synth.seed = cfg.seed;

        if (j.contains("model")) {
            const auto& m = j.at("model");
            if (m.contains("streams")) {
                const auto& streams = m.at("streams");
                if (!streams.is_array() || streams.size() != 4) {
                    throw ConfigError("model.streams: need exactly four streams");
                }
                cfg.model.streams.clear();
                for (std::size_t i = 0; i < streams.size(); ++i) {
                    StreamSpec s;
                    s.stream_id = i;
                    detail::parse_stream(streams[i], s);
                    cfg.model.streams.push_back(s);
                }
            }
            cfg.model.temporal_dim = m.value("temporal_dim", cfg.model.temporal_dim);
            cfg.model.transformer_heads =
                m.value("transformer_heads", cfg.model.transformer_heads);
        }

        if (j.contains("train")) {
            const auto& t = j.at("train");
            cfg.train.epochs = t.value("epochs", cfg.train.epochs);
            cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
            cfg.train.base_lr = t.value("base_lr", cfg.train.base_lr);
            cfg.train.min_lr = t.value("min_lr", cfg.train.min_lr);
            cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
            cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
            cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
            cfg.train.eps = t.value("eps", cfg.train.eps);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    // Resolve the geometry the model actually sees.
    cfg.model.num_classes = cfg.data.synth.classes;
    cfg.model.rgb_size = cfg.data.target_rgb_size ? cfg.data.target_rgb_size
                                                  : cfg.data.synth.rgb_size;
    cfg.model.rdm_size = cfg.data.target_rdm_size ? cfg.data.target_rdm_size
                                                  : cfg.data.synth.rdm_size;
    cfg.data.synth.validate();
    cfg.train.validate();
    return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    nlohmann::json streams = nlohmann::json::array();
    for (const auto& s : cfg.model.streams) {
        nlohmann::json e;
        e["paradigm"] = paradigm_name(s.paradigm);
        e["temporal"] = temporal_kind_name(s.temporal_kind);
        e["feature_dim"] = s.feature_dim;
        e["channels"] = {s.channels[0], s.channels[1]};
        e["patch_size"] = s.patch_size;
        e["embed_dim"] = s.embed_dim;
        streams.push_back(e);
    }
    j["model"]["streams"] = streams;
    j["model"]["temporal_dim"] = cfg.model.temporal_dim;
    j["model"]["transformer_heads"] = cfg.model.transformer_heads;
    j["data"]["classes"] = cfg.data.synth.classes;
    j["data"]["frames"] = cfg.data.synth.frames;
    j["data"]["rgb_size"] = cfg.data.synth.rgb_size;
    j["data"]["rdm_size"] = cfg.data.synth.rdm_size;
    j["data"]["train_per_class"] = cfg.data.synth.train_per_class;
    j["data"]["valid_per_class"] = cfg.data.synth.valid_per_class;
    j["data"]["test_per_class"] = cfg.data.synth.test_per_class;
    j["data"]["noise_sigma"] = cfg.data.synth.noise_sigma;
    j["data"]["target_rgb_size"] = cfg.data.target_rgb_size;
    j["data"]["target_rdm_size"] = cfg.data.target_rdm_size;
    j["train"]["epochs"] = cfg.train.epochs;
    j["train"]["batch_size"] = cfg.train.batch_size;
    j["train"]["base_lr"] = cfg.train.base_lr;
    j["train"]["min_lr"] = cfg.train.min_lr;
    j["train"]["weight_decay"] = cfg.train.weight_decay;
    j["train"]["beta1"] = cfg.train.beta1;
    j["train"]["beta2"] = cfg.train.beta2;
    j["train"]["eps"] = cfg.train.eps;
    return j;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

// First differing path between two JSON documents ("" when equal); used to
// name the offending field on checkpoint/config mismatches.
inline std::string json_diff_path(const nlohmann::json& a, const nlohmann::json& b,
                                  const std::string& path = "") {
    if (a == b) return "";
    if (a.is_object() && b.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it) {
            if (!b.contains(it.key())) return path + "/" + it.key();
            const std::string sub =
                json_diff_path(it.value(), b.at(it.key()), path + "/" + it.key());
            if (!sub.empty()) return sub;
        }
        for (auto it = b.begin(); it != b.end(); ++it) {
            if (!a.contains(it.key())) return path + "/" + it.key();
        }
        return path.empty() ? "/" : path;
    }
    if (a.is_array() && b.is_array() && a.size() == b.size()) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const std::string sub =
                json_diff_path(a[i], b[i], path + "/" + std::to_string(i));
            if (!sub.empty()) return sub;
        }
    }
    return path.empty() ? "/" : path;
}

}  // namespace fenet
