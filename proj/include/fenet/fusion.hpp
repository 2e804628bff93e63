#pragma once

#include <cmath>
#include <string>

#include "fenet/errors.hpp"
#include "fenet/ops.hpp"
#include "fenet/params.hpp"
#include "fenet/tensor.hpp"

namespace fenet {

// Arranges the two modality vectors as a two-token sequence: token 0 is RGB,
// token 1 is RDM. Attention over a single flat vector would be a no-op; the
// token pair lets it re-weight the modalities.
template <typename T>
Tensor<T> concat_modalities(const Tensor<T>& h_rgb, const Tensor<T>& h_rdm) {
    if (h_rgb.rank() != 2 || h_rdm.rank() != 2 || h_rgb.shape() != h_rdm.shape()) {
        throw ConfigError("concat_modalities: want matching [B,D] inputs, got " +
                          shape_str(h_rgb.shape()) + " and " + shape_str(h_rdm.shape()));
    }
    const std::size_t B = h_rgb.shape()[0], D = h_rgb.shape()[1];
    std::vector<Tensor<T>> tokens{reshape(h_rgb, {B, 1, D}), reshape(h_rdm, {B, 1, D})};
    return concat(tokens, 1);
}

// Single-head scaled dot-product self-attention over the modality token pair,
// mean-pooled and output-projected to one fused vector per sample.
template <typename T>
class FusionModule {
public:
    FusionModule(ParamRegistry<T>& reg, const std::string& prefix, std::size_t dim)
        : dim_(dim) {
        wq_ = reg.add(prefix + ".wq", {dim, dim}, dim);
        wk_ = reg.add(prefix + ".wk", {dim, dim}, dim);
        wv_ = reg.add(prefix + ".wv", {dim, dim}, dim);
        wo_ = reg.add(prefix + ".wo", {dim, dim}, dim);
    }

    struct Detail {
        Tensor<T> scores;   // pre-softmax, already scaled by 1/sqrt(d_k)
        Tensor<T> weights;  // softmax rows
        Tensor<T> fused;    // [B, D]
    };

    Detail forward_detailed(const Tensor<T>& tokens) const {
        if (tokens.rank() != 3 || tokens.shape()[2] != dim_) {
            throw ConfigError("fusion: want tokens [B,2," + std::to_string(dim_) +
                              "], got " + shape_str(tokens.shape()));
        }
        Tensor<T> q = linear(tokens, wq_);
        Tensor<T> k = linear(tokens, wk_);
        Tensor<T> v = linear(tokens, wv_);
        Detail d;
        d.scores = scale(matmul(q, transpose(k, 1, 2)),
                         T(1) / T(std::sqrt(double(dim_))));
        d.weights = softmax(d.scores);
        Tensor<T> attended = matmul(d.weights, v);
        d.fused = linear(mean_axis(attended, 1), wo_);
        return d;
    }

    Tensor<T> forward(const Tensor<T>& tokens) const {
        return forward_detailed(tokens).fused;
    }

    std::size_t dim() const { return dim_; }

    Tensor<T>& wq() { return wq_; }
    Tensor<T>& wk() { return wk_; }
    Tensor<T>& wv() { return wv_; }
    Tensor<T>& wo() { return wo_; }

private:
    std::size_t dim_;
    Tensor<T> wq_, wk_, wv_, wo_;
};

}  // namespace fenet
