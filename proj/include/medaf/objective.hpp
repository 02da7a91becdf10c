#pragma once

// Training objective: CAM thresholding, pairwise attention-diversity
// regularization, per-expert and fused cross-entropy.

#include <vector>

#include "medaf/network.hpp"
#include "medaf/tensor.hpp"

namespace medaf {

// ReLU(cam - mu), mu the spatial mean of this CAM. The mean is per sample and
// per expert.
inline Tensor cam_postprocess(Tape& tape, const Tensor& cam) {
    return ops::relu(tape, ops::sub_scalar(tape, cam, ops::mean_all(tape, cam)));
}

// Sum over unordered expert pairs of the cosine similarity between flattened
// processed CAMs. Each pairwise term is in [0,1] because the inputs are
// elementwise nonnegative.
inline Tensor diversity_loss(Tape& tape, const std::vector<Tensor>& processed_cams,
                             double eps = 1e-8) {
    if (processed_cams.size() < 2)
        throw std::invalid_argument("diversity_loss requires at least two CAMs");
    for (std::size_t i = 1; i < processed_cams.size(); ++i)
        ops::check_same_shape(processed_cams[0], processed_cams[i], "diversity_loss");
    Tensor total;
    bool first = true;
    for (std::size_t i = 0; i + 1 < processed_cams.size(); ++i)
        for (std::size_t j = i + 1; j < processed_cams.size(); ++j) {
            Tensor c = ops::cosine_similarity(tape, processed_cams[i], processed_cams[j], eps);
            total = first ? c : ops::add(tape, total, c);
            first = false;
        }
    return total;
}

inline Tensor cross_entropy(Tape& tape, const Tensor& logits, int label) {
    return ops::cross_entropy(tape, logits, label);
}

struct LossBreakdown {
    Tensor total;
    double ce_global = 0.0;
    double ce_experts = 0.0;  // sum over experts
    double diversity = 0.0;
};

// L = L_ce^g + beta1 * sum_i L_ce^i + beta2 * L_d, with L_d over the
// processed CAMs at the ground-truth class. L_d is 0 for a single expert.
inline LossBreakdown total_loss(Tape& tape, const ForwardBundle& bundle, int label, double beta1,
                                double beta2) {
    LossBreakdown out;
    Tensor ce_g = cross_entropy(tape, bundle.fused_logits, label);
    out.ce_global = ce_g.value();

    Tensor loss = ce_g;
    Tensor ce_sum;
    bool first = true;
    for (const auto& eo : bundle.expert_outputs) {
        Tensor ce_i = cross_entropy(tape, eo.logits, label);
        ce_sum = first ? ce_i : ops::add(tape, ce_sum, ce_i);
        first = false;
    }
    out.ce_experts = ce_sum.value();
    if (beta1 != 0.0) loss = ops::add(tape, loss, ops::scale(tape, ce_sum, beta1));

    if (bundle.expert_outputs.size() >= 2) {
        std::vector<Tensor> cams;
        cams.reserve(bundle.expert_outputs.size());
        for (const auto& eo : bundle.expert_outputs)
            cams.push_back(cam_postprocess(tape, extract_cam(tape, eo, label)));
        Tensor ld = diversity_loss(tape, cams);
        out.diversity = ld.value();
        if (beta2 != 0.0) loss = ops::add(tape, loss, ops::scale(tape, ld, beta2));
    }

    out.total = loss;
    return out;
}

}  // namespace medaf
