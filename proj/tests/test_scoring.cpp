#include <gtest/gtest.h>

#include <random>

#include "gradient_check.hpp"
#include "medaf/scoring.hpp"

using namespace medaf;
using medaf::testing::random_tensor;

TEST(FeatureScore, AllZeroMapsGiveZero) {
    EXPECT_DOUBLE_EQ(feature_score({Tensor({2, 2, 2}), Tensor({2, 2, 2})}), 0.0);
}

TEST(FeatureScore, ThreeFourFive) {
    Tensor m({1, 2, 2});
    m.data()[0] = 3.0;
    m.data()[1] = 4.0;
    EXPECT_DOUBLE_EQ(feature_score({m}), 5.0);
}

TEST(FeatureScore, MatchesFlattenNormOracle) {
    std::mt19937_64 rng(101);
    std::vector<Tensor> maps = {random_tensor({3, 2, 2}, rng), random_tensor({3, 2, 2}, rng),
                                random_tensor({3, 2, 2}, rng)};
    double acc = 0.0;
    for (std::size_t i = 0; i < maps[0].numel(); ++i) {
        double avg = (maps[0].data()[i] + maps[1].data()[i] + maps[2].data()[i]) / 3.0;
        acc += avg * avg;
    }
    EXPECT_NEAR(feature_score(maps), std::sqrt(acc), 1e-12);
    EXPECT_THROW(feature_score({maps[0], Tensor({2, 2, 2})}), std::invalid_argument);
    EXPECT_THROW(feature_score({}), std::invalid_argument);
}

TEST(LogitScore, MaxCoordinate) {
    EXPECT_DOUBLE_EQ(logit_score(Tensor::from({3}, {-2, 0, 5})), 5.0);
    EXPECT_DOUBLE_EQ(logit_score(Tensor({4}, 1.5)), 1.5);
    std::mt19937_64 rng(103);
    Tensor v = random_tensor({20}, rng);
    double mx = v.data()[0];
    for (double x : v.data()) mx = std::max(mx, x);
    EXPECT_DOUBLE_EQ(logit_score(v), mx);
}

namespace {

ForwardBundle make_bundle(std::vector<Tensor> maps, Tensor fused) {
    ForwardBundle b;
    for (auto& m : maps) {
        ExpertOutput eo;
        eo.feature_map = m;
        b.expert_outputs.push_back(eo);
    }
    b.fused_logits = std::move(fused);
    return b;
}

}  // namespace

TEST(CombinedScore, GammaZeroDegeneratesToLogitScore) {
    std::mt19937_64 rng(107);
    auto b = make_bundle({random_tensor({2, 2, 2}, rng)}, random_tensor({4}, rng));
    OsrScore s = combined_score(b, 0.0);
    EXPECT_DOUBLE_EQ(s.s_total, s.s_lg);
}

TEST(CombinedScore, ZeroMapsGiveLogitScoreForAnyGamma) {
    std::mt19937_64 rng(109);
    auto b = make_bundle({Tensor({2, 2, 2})}, random_tensor({4}, rng));
    for (double gamma : {0.1, 0.5, 2.0}) {
        OsrScore s = combined_score(b, gamma);
        EXPECT_DOUBLE_EQ(s.s_total, s.s_lg);
    }
}

TEST(CombinedScore, HandArithmetic) {
    Tensor m({1, 2, 2});
    m.data()[0] = 3.0;
    m.data()[1] = 4.0;  // single map, s_ft = 5 via 3-4-5
    auto b = make_bundle({m}, Tensor::from({2}, {2.5, 1.0}));
    OsrScore s = combined_score(b, 0.5);
    EXPECT_DOUBLE_EQ(s.s_lg, 2.5);
    EXPECT_DOUBLE_EQ(s.s_ft, 5.0);
    EXPECT_DOUBLE_EQ(s.s_total, 2.5 + 0.5 * 5.0);
}

TEST(CombinedScore, AffineInGamma) {
    std::mt19937_64 rng(113);
    auto b = make_bundle({random_tensor({2, 3, 3}, rng)}, random_tensor({5}, rng));
    OsrScore s0 = combined_score(b, 0.0), s1 = combined_score(b, 1.0), s2 = combined_score(b, 2.0);
    EXPECT_GE(s0.s_ft, 0.0);
    EXPECT_NEAR(s2.s_total - s1.s_total, s1.s_total - s0.s_total, 1e-12);
    EXPECT_NEAR(s1.s_total - s0.s_total, s0.s_ft, 1e-12);
}

TEST(CalibrateThreshold, ExhaustiveCandidateCheck) {
    std::vector<double> scores;
    for (int i = 1; i <= 20; ++i) scores.push_back(i);
    ThresholdCalibration cal = calibrate_threshold(scores, 0.95);
    EXPECT_DOUBLE_EQ(cal.tau, 2.0);
    EXPECT_DOUBLE_EQ(cal.achieved_acceptance, 0.95);
    // exhaustive oracle: largest candidate v with frac(scores >= v) >= target
    double best = -1e300;
    for (double v : scores) {
        std::size_t ge = 0;
        for (double s : scores)
            if (s >= v) ++ge;
        if (static_cast<double>(ge) / scores.size() >= 0.95) best = std::max(best, v);
    }
    EXPECT_DOUBLE_EQ(cal.tau, best);
}

TEST(CalibrateThreshold, DegenerateDistribution) {
    std::vector<double> scores(15, 3.25);
    for (double target : {0.1, 0.5, 0.95, 1.0}) {
        ThresholdCalibration cal = calibrate_threshold(scores, target);
        EXPECT_DOUBLE_EQ(cal.tau, 3.25);
        EXPECT_DOUBLE_EQ(cal.achieved_acceptance, 1.0);
    }
}

TEST(CalibrateThreshold, TargetOneAcceptsAll) {
    std::vector<double> scores = {5, 1, 9, 4};
    ThresholdCalibration cal = calibrate_threshold(scores, 1.0);
    EXPECT_DOUBLE_EQ(cal.tau, 1.0);
    EXPECT_DOUBLE_EQ(cal.achieved_acceptance, 1.0);
    EXPECT_THROW(calibrate_threshold({}, 0.95), std::invalid_argument);
    EXPECT_THROW(calibrate_threshold(scores, 0.0), std::invalid_argument);
}

TEST(CalibrateThreshold, TightnessOnDistinctScores) {
    std::mt19937_64 rng(127);
    std::uniform_real_distribution<double> dist(0, 1);
    for (int rep = 0; rep < 100; ++rep) {
        std::size_t n = 10 + rng() % 150;
        std::vector<double> scores(n);
        for (auto& s : scores) s = dist(rng);
        ThresholdCalibration cal = calibrate_threshold(scores, 0.95);
        EXPECT_GE(cal.achieved_acceptance, 0.95);
        EXPECT_LT(cal.achieved_acceptance, 0.95 + 1.0 / static_cast<double>(n) + 1e-12);
    }
}

TEST(Decide, BoundaryInclusive) {
    Tensor logits = Tensor::from({3}, {0.5, 2.0, 1.0});
    OsrScore s;
    s.s_total = 1.5;
    EXPECT_EQ(decide(s, 1.5, logits), 1);            // score == tau: known
    s.s_total = 1.5 - 1e-12;
    EXPECT_EQ(decide(s, 1.5, logits), kUnknownLabel);  // just below: unknown
}

TEST(Decide, TiesPickLowestIndex) {
    Tensor logits = Tensor::from({3}, {2.0, 2.0, 1.0});
    OsrScore s;
    s.s_total = 10.0;
    EXPECT_EQ(decide(s, 0.0, logits), 0);
}

TEST(Decide, BatchMatchesTwoPassOracle) {
    std::mt19937_64 rng(131);
    std::uniform_real_distribution<double> dist(0, 1);
    double tau = 0.4;
    for (int i = 0; i < 200; ++i) {
        Tensor logits = random_tensor({5}, rng);
        OsrScore s;
        s.s_total = dist(rng);
        int got = decide(s, tau, logits);
        // two-pass oracle: threshold first, then argmax
        int expect;
        if (s.s_total < tau) {
            expect = kUnknownLabel;
        } else {
            expect = 0;
            for (int k = 1; k < 5; ++k)
                if (logits.data()[k] > logits.data()[expect]) expect = k;
        }
        EXPECT_EQ(got, expect);
    }
}

TEST(Decide, MonotoneInScore) {
    Tensor logits = Tensor::from({2}, {1.0, 0.0});
    double tau = 0.5;
    OsrScore lo, hi;
    lo.s_total = 0.6;
    hi.s_total = 0.9;
    EXPECT_EQ(decide(lo, tau, logits), 0);
    EXPECT_EQ(decide(hi, tau, logits), 0);  // raising the score never flips known -> unknown
}

TEST(Decide, ArgmaxInvariantToLogitShift) {
    std::mt19937_64 rng(137);
    Tensor logits = random_tensor({6}, rng);
    Tensor shifted(logits.shape());
    for (std::size_t i = 0; i < logits.numel(); ++i) shifted.data()[i] = logits.data()[i] + 11.5;
    OsrScore s;
    s.s_total = 1.0;
    EXPECT_EQ(decide(s, 0.0, logits), decide(s, 0.0, shifted));
}
