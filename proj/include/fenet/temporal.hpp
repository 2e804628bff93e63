#pragma once

#include <string>
#include <vector>

#include "fenet/errors.hpp"
#include "fenet/ops.hpp"
#include "fenet/params.hpp"
#include "fenet/tensor.hpp"

namespace fenet {

enum class TemporalKind { Recurrent, TransformerEncoder, LinearProjection };

inline TemporalKind parse_temporal_kind(const std::string& name) {
    if (name == "recurrent") return TemporalKind::Recurrent;
    if (name == "transformer") return TemporalKind::TransformerEncoder;
    if (name == "linear") return TemporalKind::LinearProjection;
    throw ConfigError("unknown temporal kind '" + name +
                      "' (want recurrent|transformer|linear)");
}

inline const char* temporal_kind_name(TemporalKind k) {
    switch (k) {
        case TemporalKind::Recurrent: return "recurrent";
        case TemporalKind::TransformerEncoder: return "transformer";
        case TemporalKind::LinearProjection: return "linear";
    }
    return "?";
}

// Reduces a feature sequence [B,T',D] to one vector [B,D_t] per sample.
//   Recurrent          final hidden state of a 2-layer LSTM stack
//   TransformerEncoder mean over T' of one pre-norm encoder layer
//   LinearProjection   mean over T', then an affine map
template <typename T>
class TemporalLayer {
public:
    TemporalLayer(ParamRegistry<T>& reg, const std::string& prefix, TemporalKind kind,
                  std::size_t input_dim, std::size_t output_dim, std::size_t heads = 2)
        : kind_(kind), input_dim_(input_dim), output_dim_(output_dim), heads_(heads) {
        switch (kind_) {
            case TemporalKind::Recurrent: {
                // Gate layout along the 4H axis: input, forget, candidate, output.
                std::size_t in = input_dim;
                for (int layer = 0; layer < 2; ++layer) {
                    const std::string lp = prefix + ".lstm" + std::to_string(layer);
                    const std::size_t h = output_dim;
                    lstm_w_ih_[layer] = reg.add(lp + ".w_ih", {4 * h, in}, in);
                    lstm_w_hh_[layer] = reg.add(lp + ".w_hh", {4 * h, h}, h);
                    lstm_b_[layer] = reg.add_zeros(lp + ".b", {4 * h});
                    in = h;
                }
                break;
            }
            case TemporalKind::TransformerEncoder: {
                if (input_dim != output_dim) {
                    throw ConfigError(prefix + ": transformer temporal layer needs "
                                      "input_dim == output_dim, got " +
                                      std::to_string(input_dim) + " and " +
                                      std::to_string(output_dim));
                }
                if (heads_ == 0 || input_dim % heads_ != 0) {
                    throw ConfigError(prefix + ": feature dim " +
                                      std::to_string(input_dim) +
                                      " not divisible by " + std::to_string(heads_) +
                                      " attention heads");
                }
                const std::size_t d = input_dim;
                const std::size_t hidden = 2 * d;
                ln1_g_ = reg.add_ones(prefix + ".ln1.g", {d});
                ln1_b_ = reg.add_zeros(prefix + ".ln1.b", {d});
                wq_ = reg.add(prefix + ".attn.wq", {d, d}, d);
                bq_ = reg.add_zeros(prefix + ".attn.bq", {d});
                wk_ = reg.add(prefix + ".attn.wk", {d, d}, d);
                bk_ = reg.add_zeros(prefix + ".attn.bk", {d});
                wv_ = reg.add(prefix + ".attn.wv", {d, d}, d);
                bv_ = reg.add_zeros(prefix + ".attn.bv", {d});
                wo_ = reg.add(prefix + ".attn.wo", {d, d}, d);
                bo_ = reg.add_zeros(prefix + ".attn.bo", {d});
                ln2_g_ = reg.add_ones(prefix + ".ln2.g", {d});
                ln2_b_ = reg.add_zeros(prefix + ".ln2.b", {d});
                ffn_w1_ = reg.add(prefix + ".ffn.w1", {hidden, d}, d);
                ffn_b1_ = reg.add_zeros(prefix + ".ffn.b1", {hidden});
                ffn_w2_ = reg.add(prefix + ".ffn.w2", {d, hidden}, hidden);
                ffn_b2_ = reg.add_zeros(prefix + ".ffn.b2", {d});
                break;
            }
            case TemporalKind::LinearProjection:
                proj_w_ = reg.add(prefix + ".proj.w", {output_dim, input_dim}, input_dim);
                proj_b_ = reg.add_zeros(prefix + ".proj.b", {output_dim});
                break;
        }
    }

    TemporalKind kind() const { return kind_; }

    Tensor<T> forward(const Tensor<T>& seq) const {
        if (seq.rank() != 3 || seq.shape()[2] != input_dim_) {
            throw ConfigError("temporal: want [B,T," + std::to_string(input_dim_) +
                              "], got " + shape_str(seq.shape()));
        }
        switch (kind_) {
            case TemporalKind::Recurrent: return forward_recurrent(seq);
            case TemporalKind::TransformerEncoder: return forward_transformer(seq);
            case TemporalKind::LinearProjection: return forward_projection(seq);
        }
        throw ConfigError("temporal: bad kind");
    }

private:
    Tensor<T> forward_recurrent(const Tensor<T>& seq) const {
        const std::size_t B = seq.shape()[0], Tn = seq.shape()[1];
        const std::size_t h = output_dim_;
        std::vector<Tensor<T>> inputs;
        inputs.reserve(Tn);
        for (std::size_t t = 0; t < Tn; ++t) inputs.push_back(select(seq, 1, t));
        Tensor<T> last;
        for (int layer = 0; layer < 2; ++layer) {
            Tensor<T> hs({B, h});
            Tensor<T> cs({B, h});
            std::vector<Tensor<T>> outputs;
            outputs.reserve(Tn);
            for (std::size_t t = 0; t < Tn; ++t) {
                Tensor<T> z = add(linear(inputs[t], lstm_w_ih_[layer], lstm_b_[layer]),
                                  linear(hs, lstm_w_hh_[layer]));
                Tensor<T> gi = sigmoid(narrow(z, 1, 0, h));
                Tensor<T> gf = sigmoid(narrow(z, 1, h, h));
                Tensor<T> gg = fenet::tanh(narrow(z, 1, 2 * h, h));
                Tensor<T> go = sigmoid(narrow(z, 1, 3 * h, h));
                cs = add(mul(gf, cs), mul(gi, gg));
                hs = mul(go, fenet::tanh(cs));
                outputs.push_back(hs);
            }
            inputs = std::move(outputs);
            last = hs;
        }
        return last;
    }

    Tensor<T> forward_transformer(const Tensor<T>& seq) const {
        const std::size_t B = seq.shape()[0], Tn = seq.shape()[1], D = input_dim_;
        const std::size_t dh = D / heads_;
        Tensor<T> a = layer_norm(seq, ln1_g_, ln1_b_);
        const auto split_heads = [&](Tensor<T> x) {
            // [B,T,D] -> [B,heads,T,dh]
            return transpose(reshape(x, {B, Tn, heads_, dh}), 1, 2);
        };
        Tensor<T> q = split_heads(linear(a, wq_, bq_));
        Tensor<T> k = split_heads(linear(a, wk_, bk_));
        Tensor<T> v = split_heads(linear(a, wv_, bv_));
        Tensor<T> scores =
            scale(matmul(q, transpose(k, 2, 3)), T(1) / T(std::sqrt(double(dh))));
        Tensor<T> attended = matmul(softmax(scores), v);
        Tensor<T> merged = reshape(transpose(attended, 1, 2), {B, Tn, D});
        Tensor<T> x1 = add(seq, linear(merged, wo_, bo_));
        Tensor<T> f = layer_norm(x1, ln2_g_, ln2_b_);
        f = linear(relu(linear(f, ffn_w1_, ffn_b1_)), ffn_w2_, ffn_b2_);
        Tensor<T> x2 = add(x1, f);
        return mean_axis(x2, 1);
    }

    Tensor<T> forward_projection(const Tensor<T>& seq) const {
        return linear(mean_axis(seq, 1), proj_w_, proj_b_);
    }

    TemporalKind kind_;
    std::size_t input_dim_, output_dim_, heads_;

    Tensor<T> lstm_w_ih_[2], lstm_w_hh_[2], lstm_b_[2];

    Tensor<T> ln1_g_, ln1_b_, wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
    Tensor<T> ln2_g_, ln2_b_, ffn_w1_, ffn_b1_, ffn_w2_, ffn_b2_;

    Tensor<T> proj_w_, proj_b_;
};

}  // namespace fenet
