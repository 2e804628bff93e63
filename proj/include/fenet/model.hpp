#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "fenet/backbones.hpp"
#include "fenet/ensemble.hpp"
#include "fenet/errors.hpp"
#include "fenet/fusion.hpp"
#include "fenet/params.hpp"
#include "fenet/temporal.hpp"
#include "fenet/tensor.hpp"

namespace fenet {

struct ModelConfig {
    std::vector<StreamSpec> streams;
    std::size_t temporal_dim = 64;  // D_t
    std::size_t num_classes = 8;    // K
    std::size_t transformer_heads = 2;
    std::size_t rgb_channels = 3;
    std::size_t rdm_channels = 1;
    // Clip geometry after preprocessing; pinned here so stride/patch
    // mismatches surface at build time.
    std::size_t rgb_size = 16;
    std::size_t rdm_size = 16;
};

// Default stream lineup: one spec per paradigm, with the declared default
// temporal pairing (full3d/mixed2d3d -> recurrent, factorized2plus1d ->
// transformer, window_attention -> linear). Overridable in config.
inline std::vector<StreamSpec> default_streams() {
    std::vector<StreamSpec> streams(4);
    streams[0].stream_id = 0;
    streams[0].paradigm = Paradigm::Full3D;
    streams[0].temporal_kind = TemporalKind::Recurrent;
    streams[1].stream_id = 1;
    streams[1].paradigm = Paradigm::Mixed2D3D;
    streams[1].temporal_kind = TemporalKind::Recurrent;
    streams[2].stream_id = 2;
    streams[2].paradigm = Paradigm::Factorized2Plus1D;
    streams[2].temporal_kind = TemporalKind::TransformerEncoder;
    streams[3].stream_id = 3;
    streams[3].paradigm = Paradigm::WindowAttention;
    streams[3].temporal_kind = TemporalKind::LinearProjection;
    return streams;
}

inline ModelConfig default_model_config() {
    ModelConfig cfg;
    cfg.streams = default_streams();
    return cfg;
}

template <typename T>
struct StreamOutput {
    Tensor<T> h_rgb, h_rdm;  // [B, D_t]
    Tensor<T> fused;         // [B, D_t]
    Tensor<T> logits;        // [B, K]
};

template <typename T>
struct ModelOutput {
    std::vector<StreamOutput<T>> streams;

    std::vector<Tensor<T>> head_logits() const {
        std::vector<Tensor<T>> out;
        out.reserve(streams.size());
        for (const auto& s : streams) out.push_back(s.logits);
        return out;
    }
};

// The full parallel-stream classifier: per stream a pair of modality
// backbones, a pair of temporal layers, an attention fusion module, and a
// linear head. RGB and RDM networks never share parameters.
template <typename T>
class Model {
public:
    explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
        if (cfg.streams.empty()) throw ConfigError("model: no streams configured");
        std::set<Paradigm> seen;
        for (const auto& s : cfg.streams) {
            if (!seen.insert(s.paradigm).second) {
                throw ConfigError(std::string("model: duplicate paradigm '") +
                                  paradigm_name(s.paradigm) +
                                  "'; streams must be pairwise distinct");
            }
            Backbone<T>::validate_spatial(s.paradigm, cfg.rgb_size, cfg.rgb_size,
                                          s.patch_size);
            Backbone<T>::validate_spatial(s.paradigm, cfg.rdm_size, cfg.rdm_size,
                                          s.patch_size);
        }
        streams_.reserve(cfg.streams.size());
        for (std::size_t i = 0; i < cfg.streams.size(); ++i) {
            const std::string prefix = "s" + std::to_string(i);
            streams_.push_back(
                std::make_unique<Stream>(registry_, prefix, cfg.streams[i], cfg));
        }
    }

    void init_params(std::uint64_t seed) { registry_.initialize(seed); }

    // v_rgb [B,T,C,H,W], v_rdm [B,A,T,C,H_r,W_d] -> per-stream logits.
    ModelOutput<T> forward(const Tensor<T>& v_rgb, const Tensor<T>& v_rdm) const {
        ModelOutput<T> out;
        out.streams.reserve(streams_.size());
        for (const auto& s : streams_) {
            StreamOutput<T> so;
            Tensor<T> f_rgb = extract_rgb(s->rgb_backbone, v_rgb);
            Tensor<T> f_rdm = extract_rdm(s->rdm_backbone, v_rdm);
            so.h_rgb = s->rgb_temporal.forward(f_rgb);
            so.h_rdm = s->rdm_temporal.forward(f_rdm);
            Tensor<T> tokens = concat_modalities(so.h_rgb, so.h_rdm);
            so.fused = s->fusion.forward(tokens);
            so.logits = head_logits(s->head, so.fused);
            out.streams.push_back(std::move(so));
        }
        return out;
    }

    std::size_t num_streams() const { return streams_.size(); }
    const ModelConfig& config() const { return cfg_; }
    ParamRegistry<T>& params() { return registry_; }
    const ParamRegistry<T>& params() const { return registry_; }

    struct Stream {
        Backbone<T> rgb_backbone;
        Backbone<T> rdm_backbone;
        TemporalLayer<T> rgb_temporal;
        TemporalLayer<T> rdm_temporal;
        FusionModule<T> fusion;
        ClassifierHead<T> head;

        // Members initialize in declaration order, which pins the parameter
        // registration order.
        Stream(ParamRegistry<T>& reg, const std::string& prefix, const StreamSpec& sp,
               const ModelConfig& cfg)
            : rgb_backbone(reg, prefix + ".rgb.backbone", sp, cfg.rgb_channels),
              rdm_backbone(reg, prefix + ".rdm.backbone", sp, cfg.rdm_channels),
              rgb_temporal(reg, prefix + ".rgb.temporal", sp.temporal_kind,
                           sp.feature_dim, cfg.temporal_dim, cfg.transformer_heads),
              rdm_temporal(reg, prefix + ".rdm.temporal", sp.temporal_kind,
                           sp.feature_dim, cfg.temporal_dim, cfg.transformer_heads),
              fusion(reg, prefix + ".fusion", cfg.temporal_dim),
              head(reg, prefix + ".head", cfg.num_classes, cfg.temporal_dim) {}
    };

    Stream& stream(std::size_t i) { return *streams_[i]; }
    const Stream& stream(std::size_t i) const { return *streams_[i]; }

private:
    ModelConfig cfg_;
    ParamRegistry<T> registry_;
    std::vector<std::unique_ptr<Stream>> streams_;
};

}  // namespace fenet
