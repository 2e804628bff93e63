#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace fenet {

// Canonical list of the architecture's computation stages. The docs table in
// docs/architecture.md mirrors this list row for row; a test keeps the two in
// sync.
struct StageInfo {
    std::string_view name;
    std::string_view formula;
    std::string_view implementation;
};

inline constexpr std::array<StageInfo, 14> kArchitectureStages{{
    {"rgb_input_layout", "V_rgb in R^[B,T,C,H,W]",
     "data.hpp: MultimodalSample / assemble_batch"},
    {"rdm_input_layout", "V_rdm in R^[B,A,T,C,H,W], A = 3",
     "data.hpp: MultimodalSample / assemble_batch"},
    {"rgb_feature_extraction", "F_rgb_i = Phi_i_rgb(V_rgb)",
     "backbones.hpp: extract_rgb"},
    {"rdm_antenna_average", "F_rdm_i = (1/A) sum_a Phi_i_rdm(V_rdm_a)",
     "backbones.hpp: extract_rdm"},
    {"rgb_temporal_encoding", "H_rgb_i = T_i_rgb(F_rgb_i)",
     "temporal.hpp: TemporalLayer::forward"},
    {"rdm_temporal_encoding", "H_rdm_i = T_i_rdm(F_rdm_i)",
     "temporal.hpp: TemporalLayer::forward"},
    {"modality_concatenation", "H_cat_i = [H_rgb_i ; H_rdm_i]",
     "fusion.hpp: concat_modalities"},
    {"scaled_dot_product_attention", "softmax(Q K^T / sqrt(d_k)) V",
     "fusion.hpp: FusionModule::forward_detailed"},
    {"fused_vector", "F_fused_i = Psi_i(H_cat_i)",
     "fusion.hpp: FusionModule::forward"},
    {"head_logits", "L_i = F_fused_i W_c_i^T + b_c_i",
     "ensemble.hpp: head_logits"},
    {"head_probabilities", "P_i = softmax(L_i)",
     "ensemble.hpp via ops.hpp: softmax"},
    {"summed_cross_entropy_loss", "Loss = sum_i CE(L_i, y_true)",
     "ensemble.hpp: total_loss"},
    {"probability_averaging", "P_final = (1/M) sum_i P_i",
     "ensemble.hpp: ensemble_average"},
    {"argmax_prediction", "y_hat = argmax_k P_final[:,k]",
     "ensemble.hpp: predict"},
}};

}  // namespace fenet
