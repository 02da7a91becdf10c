#pragma once

// Unknown-rejection scoring: max-fused-logit score, norm-of-averaged-feature-
// maps score, their gamma-weighted combination, threshold calibration at a
// target known-acceptance rate, and the accept/reject decision.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "medaf/network.hpp"

namespace medaf {

constexpr int kUnknownLabel = -1;

struct OsrScore {
    double s_lg = 0.0;
    double s_ft = 0.0;  // >= 0
    double s_total = 0.0;
    double gamma = 0.0;
};

struct ThresholdCalibration {
    double tau = 0.0;
    double target_tpr = 0.95;
    std::size_t n_known_used = 0;
    double achieved_acceptance = 0.0;
};

// Elementwise average of the experts' class feature maps, flattened,
// Euclidean norm.
inline double feature_score(const std::vector<Tensor>& expert_feature_maps) {
    if (expert_feature_maps.empty())
        throw std::invalid_argument("feature_score: at least one map required");
    for (std::size_t i = 1; i < expert_feature_maps.size(); ++i)
        ops::check_same_shape(expert_feature_maps[0], expert_feature_maps[i], "feature_score");
    std::size_t n = expert_feature_maps[0].numel();
    double inv = 1.0 / static_cast<double>(expert_feature_maps.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double avg = 0.0;
        for (const auto& m : expert_feature_maps) avg += m.data()[i];
        avg *= inv;
        acc += avg * avg;
    }
    return std::sqrt(acc);
}

// Max coordinate of the raw fused logits (no softmax).
inline double logit_score(const Tensor& fused_logits) {
    if (fused_logits.numel() == 0) throw std::invalid_argument("logit_score: empty logits");
    return *std::max_element(fused_logits.data().begin(), fused_logits.data().end());
}

inline OsrScore combined_score(const ForwardBundle& bundle, double gamma) {
    std::vector<Tensor> maps;
    maps.reserve(bundle.expert_outputs.size());
    for (const auto& eo : bundle.expert_outputs) maps.push_back(eo.feature_map);
    OsrScore s;
    s.s_lg = logit_score(bundle.fused_logits);
    s.s_ft = feature_score(maps);
    s.gamma = gamma;
    s.s_total = s.s_lg + gamma * s.s_ft;
    return s;
}

// tau = largest observed score v such that the fraction of known scores >= v
// is at least target_tpr; acceptance is score >= tau. Empirical quantile over
// observed values, no interpolation.
inline ThresholdCalibration calibrate_threshold(const std::vector<double>& known_scores,
                                                double target_tpr = 0.95) {
    if (known_scores.empty()) throw std::invalid_argument("calibrate_threshold: empty scores");
    if (target_tpr <= 0.0 || target_tpr > 1.0)
        throw std::invalid_argument("calibrate_threshold: target must be in (0,1]");
    std::vector<double> sorted = known_scores;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    std::size_t n = sorted.size();
    std::size_t m = static_cast<std::size_t>(std::ceil(target_tpr * static_cast<double>(n)));
    if (m == 0) m = 1;
    ThresholdCalibration cal;
    cal.tau = sorted[m - 1];
    cal.target_tpr = target_tpr;
    cal.n_known_used = n;
    std::size_t accepted = 0;
    for (double s : known_scores)
        if (s >= cal.tau) ++accepted;
    cal.achieved_acceptance = static_cast<double>(accepted) / static_cast<double>(n);
    return cal;
}

// score >= tau: known, argmax of fused logits (ties -> lowest index);
// otherwise the distinguished unknown label.
inline int decide(const OsrScore& score, double tau, const Tensor& fused_logits) {
    if (score.s_total < tau) return kUnknownLabel;
    return static_cast<int>(std::max_element(fused_logits.data().begin(),
                                             fused_logits.data().end()) -
                            fused_logits.data().begin());
}

}  // namespace medaf
