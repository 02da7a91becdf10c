#pragma once

// Open-set evaluation metrics: AUROC (rank statistic, ties 1/2), TNR@TPR95,
// balanced detection accuracy, AUPR in both directions (step-wise
// summation), and macro-F1 over K+1 classes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "medaf/scoring.hpp"

namespace medaf {

struct MetricsReport {
    std::optional<double> auroc;
    std::optional<double> tnr_at_tpr95;
    std::optional<double> dtacc;
    std::optional<double> auin;
    std::optional<double> auout;
    std::optional<double> macro_f1;
    std::optional<double> closed_set_accuracy;
    std::size_t n_known = 0;
    std::size_t n_unknown = 0;
};

namespace metrics {

inline void check_nonempty(const std::vector<double>& a, const std::vector<double>& b,
                           const char* op) {
    if (a.empty() || b.empty())
        throw std::invalid_argument(std::string(op) + ": both score lists must be nonempty");
}

// P(random known > random unknown) + 0.5 * P(tie), via midranks.
inline double auroc(const std::vector<double>& known_scores,
                    const std::vector<double>& unknown_scores) {
    check_nonempty(known_scores, unknown_scores, "auroc");
    std::size_t n = known_scores.size(), m = unknown_scores.size();
    std::vector<std::pair<double, int>> all;  // score, is_known
    all.reserve(n + m);
    for (double s : known_scores) all.emplace_back(s, 1);
    for (double s : unknown_scores) all.emplace_back(s, 0);
    std::sort(all.begin(), all.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    // midrank sum of knowns
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (all[k].second) rank_sum += midrank;
        i = j;
    }
    double u = rank_sum - static_cast<double>(n) * (n + 1) / 2.0;
    return u / (static_cast<double>(n) * static_cast<double>(m));
}

// TNR on unknowns at the threshold calibrated for the target known TPR.
inline double tnr_at_tpr(const std::vector<double>& known_scores,
                         const std::vector<double>& unknown_scores, double tpr_target = 0.95) {
    check_nonempty(known_scores, unknown_scores, "tnr_at_tpr");
    double tau = calibrate_threshold(known_scores, tpr_target).tau;
    std::size_t below = 0;
    for (double s : unknown_scores)
        if (s < tau) ++below;
    return static_cast<double>(below) / static_cast<double>(unknown_scores.size());
}

// max over thresholds of 0.5*(TPR + TNR); candidate thresholds are all
// distinct observed scores plus +/- infinity. Balanced weighting regardless
// of sample counts.
inline double dtacc(const std::vector<double>& known_scores,
                    const std::vector<double>& unknown_scores) {
    check_nonempty(known_scores, unknown_scores, "dtacc");
    std::vector<double> cand;
    cand.reserve(known_scores.size() + unknown_scores.size() + 2);
    cand.insert(cand.end(), known_scores.begin(), known_scores.end());
    cand.insert(cand.end(), unknown_scores.begin(), unknown_scores.end());
    cand.push_back(-std::numeric_limits<double>::infinity());
    cand.push_back(std::numeric_limits<double>::infinity());
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    double best = 0.0;
    for (double tau : cand) {
        std::size_t tp = 0, tn = 0;
        for (double s : known_scores)
            if (s >= tau) ++tp;
        for (double s : unknown_scores)
            if (s < tau) ++tn;
        double acc = 0.5 * (static_cast<double>(tp) / known_scores.size() +
                            static_cast<double>(tn) / unknown_scores.size());
        best = std::max(best, acc);
    }
    return best;
}

// Area under the precision-recall curve by descending-score sweep with
// step-wise summation. Tied scores are processed as one block: the recall
// increment of the block is credited at the precision after the whole block.
inline double aupr(const std::vector<double>& positive_scores,
                   const std::vector<double>& negative_scores) {
    check_nonempty(positive_scores, negative_scores, "aupr");
    std::vector<std::pair<double, int>> all;
    all.reserve(positive_scores.size() + negative_scores.size());
    for (double s : positive_scores) all.emplace_back(s, 1);
    for (double s : negative_scores) all.emplace_back(s, 0);
    std::sort(all.begin(), all.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    std::size_t P = positive_scores.size();
    std::size_t tp = 0, fp = 0;
    double area = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i, dp = 0, dn = 0;
        while (j < all.size() && all[j].first == all[i].first) {
            if (all[j].second) ++dp; else ++dn;
            ++j;
        }
        tp += dp;
        fp += dn;
        if (dp > 0) {
            double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            area += precision * static_cast<double>(dp) / static_cast<double>(P);
        }
        i = j;
    }
    return area;
}

inline double auin(const std::vector<double>& known_scores,
                   const std::vector<double>& unknown_scores) {
    return aupr(known_scores, unknown_scores);
}

inline double auout(const std::vector<double>& known_scores,
                    const std::vector<double>& unknown_scores) {
    std::vector<double> neg_known(known_scores), neg_unknown(unknown_scores);
    for (auto& s : neg_known) s = -s;
    for (auto& s : neg_unknown) s = -s;
    return aupr(neg_unknown, neg_known);
}

// Unweighted mean of per-class F1 over the K known classes plus the unknown
// class. A class absent from both truth and prediction contributes F1 = 0.
inline double macro_f1_k_plus_1(const std::vector<int>& decisions, const std::vector<int>& truths,
                                int num_known_classes) {
    if (decisions.size() != truths.size())
        throw std::invalid_argument("macro_f1: size mismatch");
    auto check = [&](int label) {
        if (label != kUnknownLabel && (label < 0 || label >= num_known_classes))
            throw std::invalid_argument("macro_f1: label out of range");
    };
    double f1_sum = 0.0;
    for (int cls = -1; cls < num_known_classes; ++cls) {  // -1 is the unknown class
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < decisions.size(); ++i) {
            check(decisions[i]);
            check(truths[i]);
            bool pred = decisions[i] == cls, truth = truths[i] == cls;
            if (pred && truth) ++tp;
            else if (pred) ++fp;
            else if (truth) ++fn;
        }
        if (tp > 0) f1_sum += 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    }
    return f1_sum / static_cast<double>(num_known_classes + 1);
}

}  // namespace metrics

inline MetricsReport compute_metrics(const std::vector<double>& known_scores,
                                     const std::vector<double>& unknown_scores) {
    MetricsReport r;
    r.n_known = known_scores.size();
    r.n_unknown = unknown_scores.size();
    if (!known_scores.empty() && !unknown_scores.empty()) {
        r.auroc = metrics::auroc(known_scores, unknown_scores);
        r.tnr_at_tpr95 = metrics::tnr_at_tpr(known_scores, unknown_scores, 0.95);
        r.dtacc = metrics::dtacc(known_scores, unknown_scores);
        r.auin = metrics::auin(known_scores, unknown_scores);
        r.auout = metrics::auout(known_scores, unknown_scores);
    }
    return r;
}

}  // namespace medaf
