#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "fenet/errors.hpp"
#include "fenet/ops.hpp"
#include "fenet/params.hpp"
#include "fenet/temporal.hpp"
#include "fenet/tensor.hpp"

namespace fenet {

inline constexpr std::size_t kAntennasExpected = 3;

// Four architecturally diverse spatiotemporal feature extractors. Depth is
// two blocks; paradigm identity, not capacity, is what the ensemble needs.
enum class Paradigm { Full3D, Mixed2D3D, Factorized2Plus1D, WindowAttention };

inline Paradigm parse_paradigm(const std::string& name) {
    if (name == "full3d") return Paradigm::Full3D;
    if (name == "mixed2d3d") return Paradigm::Mixed2D3D;
    if (name == "factorized2plus1d") return Paradigm::Factorized2Plus1D;
    if (name == "window_attention") return Paradigm::WindowAttention;
    throw ConfigError("unknown paradigm '" + name +
                      "' (want full3d|mixed2d3d|factorized2plus1d|window_attention)");
}

inline const char* paradigm_name(Paradigm p) {
    switch (p) {
        case Paradigm::Full3D: return "full3d";
        case Paradigm::Mixed2D3D: return "mixed2d3d";
        case Paradigm::Factorized2Plus1D: return "factorized2plus1d";
        case Paradigm::WindowAttention: return "window_attention";
    }
    return "?";
}

// Configuration of one of the four parallel streams.
struct StreamSpec {
    std::size_t stream_id = 0;
    Paradigm paradigm = Paradigm::Full3D;
    TemporalKind temporal_kind = TemporalKind::Recurrent;
    std::size_t feature_dim = 64;                  // D
    std::array<std::size_t, 2> channels = {16, 32};
    std::size_t patch_size = 4;    // WindowAttention only
    std::size_t embed_dim = 32;    // WindowAttention only
};

// Maps a clip [B,T,C,H,W] to a feature sequence [B,T',D]; the temporal axis
// survives so a temporal layer downstream sees a sequence.
template <typename T>
class Backbone {
public:
    Backbone(ParamRegistry<T>& reg, const std::string& prefix, const StreamSpec& spec,
             std::size_t in_channels)
        : spec_(spec), in_channels_(in_channels) {
        const std::size_t c1 = spec.channels[0], c2 = spec.channels[1];
        const std::size_t d = spec.feature_dim;
        switch (spec.paradigm) {
            case Paradigm::Full3D:
                conv_w_[0] = reg.add(prefix + ".conv1.w", {c1, in_channels, 3, 3, 3},
                                     in_channels * 27);
                conv_b_[0] = reg.add_zeros(prefix + ".conv1.b", {c1});
                conv_w_[1] = reg.add(prefix + ".conv2.w", {c2, c1, 3, 3, 3}, c1 * 27);
                conv_b_[1] = reg.add_zeros(prefix + ".conv2.b", {c2});
                break;
            case Paradigm::Mixed2D3D:
                conv_w_[0] = reg.add(prefix + ".conv1.w", {c1, in_channels, 3, 3, 3},
                                     in_channels * 27);
                conv_b_[0] = reg.add_zeros(prefix + ".conv1.b", {c1});
                conv_w_[1] = reg.add(prefix + ".conv2.w", {c2, c1, 1, 3, 3}, c1 * 9);
                conv_b_[1] = reg.add_zeros(prefix + ".conv2.b", {c2});
                break;
            case Paradigm::Factorized2Plus1D:
                conv_w_[0] = reg.add(prefix + ".block1.spatial.w",
                                     {c1, in_channels, 1, 3, 3}, in_channels * 9);
                conv_b_[0] = reg.add_zeros(prefix + ".block1.spatial.b", {c1});
                conv_w_[1] = reg.add(prefix + ".block1.temporal.w", {c1, c1, 3, 1, 1},
                                     c1 * 3);
                conv_b_[1] = reg.add_zeros(prefix + ".block1.temporal.b", {c1});
                conv_w_[2] = reg.add(prefix + ".block2.spatial.w", {c2, c1, 1, 3, 3},
                                     c1 * 9);
                conv_b_[2] = reg.add_zeros(prefix + ".block2.spatial.b", {c2});
                conv_w_[3] = reg.add(prefix + ".block2.temporal.w", {c2, c2, 3, 1, 1},
                                     c2 * 3);
                conv_b_[3] = reg.add_zeros(prefix + ".block2.temporal.b", {c2});
                break;
            case Paradigm::WindowAttention: {
                const std::size_t p = spec.patch_size, e = spec.embed_dim;
                const std::size_t patch_dim = in_channels * p * p;
                embed_w_ = reg.add(prefix + ".embed.w", {e, patch_dim}, patch_dim);
                embed_b_ = reg.add_zeros(prefix + ".embed.b", {e});
                wq_ = reg.add(prefix + ".attn.wq", {e, e}, e);
                wk_ = reg.add(prefix + ".attn.wk", {e, e}, e);
                wv_ = reg.add(prefix + ".attn.wv", {e, e}, e);
                break;
            }
        }
        const std::size_t head_in =
            spec.paradigm == Paradigm::WindowAttention ? spec.embed_dim : c2;
        head_w_ = reg.add(prefix + ".head.w", {d, head_in}, head_in);
        head_b_ = reg.add_zeros(prefix + ".head.b", {d});
    }

    // Build-time check that the configured clip geometry survives the
    // paradigm's strides and patching.
    static void validate_spatial(Paradigm paradigm, std::size_t h, std::size_t w,
                                 std::size_t patch_size) {
        if (paradigm == Paradigm::WindowAttention) {
            if (h % patch_size != 0 || w % patch_size != 0) {
                throw ConfigError("window_attention: spatial dims " +
                                  std::to_string(h) + "x" + std::to_string(w) +
                                  " not divisible by patch size " +
                                  std::to_string(patch_size));
            }
        } else {
            if (h % 4 != 0 || w % 4 != 0) {
                throw ConfigError(std::string(paradigm_name(paradigm)) +
                                  ": spatial dims " + std::to_string(h) + "x" +
                                  std::to_string(w) +
                                  " not divisible by the two stride-2 blocks");
            }
        }
    }

    const StreamSpec& spec() const { return spec_; }

    Tensor<T> forward(const Tensor<T>& clip) const {
        if (clip.rank() != 5) {
            throw ConfigError("backbone: want clip [B,T,C,H,W], got " +
                              shape_str(clip.shape()));
        }
        if (clip.shape()[2] != in_channels_) {
            throw ConfigError("backbone: clip " + shape_str(clip.shape()) + " has " +
                              std::to_string(clip.shape()[2]) + " channels, network expects " +
                              std::to_string(in_channels_));
        }
        switch (spec_.paradigm) {
            case Paradigm::Full3D: {
                Tensor<T> x = transpose(clip, 1, 2);  // [B,C,T,H,W]
                x = relu(conv3d(x, conv_w_[0], conv_b_[0], {{1, 2, 2}, {1, 1, 1}}));
                x = relu(conv3d(x, conv_w_[1], conv_b_[1], {{1, 2, 2}, {1, 1, 1}}));
                return head(x);
            }
            case Paradigm::Mixed2D3D: {
                Tensor<T> x = transpose(clip, 1, 2);
                x = relu(conv3d(x, conv_w_[0], conv_b_[0], {{1, 2, 2}, {1, 1, 1}}));
                x = relu(conv3d(x, conv_w_[1], conv_b_[1], {{1, 2, 2}, {0, 1, 1}}));
                return head(x);
            }
            case Paradigm::Factorized2Plus1D: {
                Tensor<T> x = transpose(clip, 1, 2);
                x = relu(conv3d(x, conv_w_[0], conv_b_[0], {{1, 2, 2}, {0, 1, 1}}));
                x = relu(conv3d(x, conv_w_[1], conv_b_[1], {{1, 1, 1}, {1, 0, 0}}));
                x = relu(conv3d(x, conv_w_[2], conv_b_[2], {{1, 2, 2}, {0, 1, 1}}));
                x = relu(conv3d(x, conv_w_[3], conv_b_[3], {{1, 1, 1}, {1, 0, 0}}));
                return head(x);
            }
            case Paradigm::WindowAttention: {
                Tensor<T> patches = extract_patches(clip, spec_.patch_size);
                Tensor<T> e = linear(patches, embed_w_, embed_b_);  // [B,T,P,E]
                Tensor<T> q = linear(e, wq_);
                Tensor<T> k = linear(e, wk_);
                Tensor<T> v = linear(e, wv_);
                Tensor<T> scores = scale(matmul(q, transpose(k, 2, 3)),
                                         T(1) / T(std::sqrt(double(spec_.embed_dim))));
                Tensor<T> attended = matmul(softmax(scores), v);  // [B,T,P,E]
                Tensor<T> pooled = mean_axis(attended, 2);        // [B,T,E]
                return linear(pooled, head_w_, head_b_);
            }
        }
        throw ConfigError("backbone: bad paradigm");
    }

private:
    // [B,C,T,H,W] -> spatial mean -> [B,T,C] -> linear -> [B,T,D]
    Tensor<T> head(const Tensor<T>& x) const {
        Tensor<T> pooled = mean_axis(mean_axis(x, 4), 3);  // [B,C,T]
        Tensor<T> seq = transpose(pooled, 1, 2);           // [B,T,C]
        return linear(seq, head_w_, head_b_);
    }

    StreamSpec spec_;
    std::size_t in_channels_;
    Tensor<T> conv_w_[4], conv_b_[4];
    Tensor<T> embed_w_, embed_b_, wq_, wk_, wv_;
    Tensor<T> head_w_, head_b_;
};

template <typename T>
Tensor<T> extract_rgb(const Backbone<T>& backbone, const Tensor<T>& v_rgb) {
    return backbone.forward(v_rgb);
}

// Runs every antenna slice through the same network and averages the feature
// sequences elementwise.
template <typename T>
Tensor<T> extract_rdm(const Backbone<T>& backbone, const Tensor<T>& v_rdm) {
    if (v_rdm.rank() != 6) {
        throw ConfigError("extract_rdm: want [B,A,T,C,H,W], got " +
                          shape_str(v_rdm.shape()));
    }
    const std::size_t antennas = v_rdm.shape()[1];
    if (antennas != kAntennasExpected) {
        throw ConfigError("extract_rdm: expected " +
                          std::to_string(kAntennasExpected) + " antennas, got " +
                          std::to_string(antennas) + " in " + shape_str(v_rdm.shape()));
    }
    Tensor<T> sum;
    for (std::size_t a = 0; a < antennas; ++a) {
        Tensor<T> feats = backbone.forward(select(v_rdm, 1, a));
        sum = a == 0 ? feats : add(sum, feats);
    }
    return scale(sum, T(1) / T(antennas));
}

}  // namespace fenet
