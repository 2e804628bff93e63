#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "fenet/errors.hpp"
#include "fenet/ops.hpp"
#include "fenet/params.hpp"
#include "fenet/tensor.hpp"

namespace fenet {

// Per-stream linear classifier.
template <typename T>
struct ClassifierHead {
    Tensor<T> weight;  // [K, D_t]
    Tensor<T> bias;    // [K]

    ClassifierHead() = default;
    ClassifierHead(ParamRegistry<T>& reg, const std::string& prefix,
                   std::size_t num_classes, std::size_t dim) {
        if (num_classes < 2) {
            throw ConfigError(prefix + ": need at least 2 classes, got " +
                              std::to_string(num_classes));
        }
        weight = reg.add(prefix + ".w", {num_classes, dim}, dim);
        bias = reg.add_zeros(prefix + ".b", {num_classes});
    }
};

template <typename T>
Tensor<T> head_logits(const ClassifierHead<T>& head, const Tensor<T>& fused) {
    return linear(fused, head.weight, head.bias);
}

// Summed cross-entropy across all heads; gradients flow into every stream.
template <typename T>
Tensor<T> total_loss(const std::vector<Tensor<T>>& per_head_logits,
                     const std::vector<int>& labels) {
    if (per_head_logits.empty()) throw UsageError("total_loss: no heads");
    Tensor<T> loss = cross_entropy_from_logits(per_head_logits[0], labels);
    for (std::size_t i = 1; i < per_head_logits.size(); ++i) {
        loss = add(loss, cross_entropy_from_logits(per_head_logits[i], labels));
    }
    return loss;
}

// Mean of the per-head probability rows; a mean of distributions is again a
// distribution.
template <typename T>
Tensor<T> ensemble_average(const std::vector<Tensor<T>>& per_head_probs) {
    if (per_head_probs.empty()) throw UsageError("ensemble_average: no heads");
    const Shape& shape = per_head_probs[0].shape();
    Tensor<T> sum = per_head_probs[0];
    for (std::size_t i = 1; i < per_head_probs.size(); ++i) {
        if (per_head_probs[i].shape() != shape) {
            throw ConfigError("ensemble_average: shape mismatch " + shape_str(shape) +
                              " vs " + shape_str(per_head_probs[i].shape()));
        }
        sum = add(sum, per_head_probs[i]);
    }
    return scale(sum, T(1) / T(per_head_probs.size()));
}

// Argmax per row; ties break toward the lowest class index.
template <typename T>
std::vector<int> predict(const Tensor<T>& p_final) {
    if (p_final.rank() != 2) {
        throw UsageError("predict: want [B,K], got " + shape_str(p_final.shape()));
    }
    const std::size_t b = p_final.shape()[0], k = p_final.shape()[1];
    std::vector<int> out(b);
    for (std::size_t i = 0; i < b; ++i) {
        const T* row = p_final.data() + i * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;
        out[i] = int(best);
    }
    return out;
}

inline double top1_accuracy(const std::vector<int>& y_hat,
                            const std::vector<int>& y_true) {
    if (y_hat.size() != y_true.size()) {
        throw UsageError("top1_accuracy: length mismatch " +
                         std::to_string(y_hat.size()) + " vs " +
                         std::to_string(y_true.size()));
    }
    if (y_hat.empty()) throw UsageError("top1_accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y_hat.size(); ++i)
        if (y_hat[i] == y_true[i]) ++hits;
    return double(hits) / double(y_hat.size());
}

struct EvalReport {
    std::string split;
    std::size_t n_samples = 0;
    double top1_ensemble = 0.0;
    std::vector<double> top1_per_head;
    std::vector<std::size_t> confusion;  // K x K row-major, rows = true class
    std::size_t num_classes = 0;
};

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["split"] = r.split;
    j["n_samples"] = r.n_samples;
    j["top1_ensemble"] = r.top1_ensemble;
    j["top1_per_head"] = r.top1_per_head;
    j["confusion_matrix"] = r.confusion;
    return j;
}

}  // namespace fenet
