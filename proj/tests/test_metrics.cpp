#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "sift/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace sift;
using oracle::pairwise_auc;
using oracle::scan_specificity;

namespace {

constexpr auto N = ClassLabel::normal;
constexpr auto A = ClassLabel::abnormal;

struct Instance {
    std::vector<double> scores;
    std::vector<ClassLabel> labels;
};

// Scores on a coarse grid so ties are common.
Instance random_instance(Rng& rng, std::size_t n) {
    Instance inst;
    inst.labels = test::random_labels(rng, n, 0.3);
    inst.scores.resize(n);
    const bool coarse = bernoulli(rng, 0.5);
    for (std::size_t i = 0; i < n; ++i) {
        double s = uniform01(rng) + (inst.labels[i] == A ? 0.3 : 0.0);
        inst.scores[i] = coarse ? std::round(s * 10.0) / 10.0 : s;
    }
    return inst;
}

}  // namespace

// =============================================================================
// AUC
// =============================================================================

TEST(Auc, PerfectSeparationIsOne) {
    std::vector<double> s{0.1, 0.2, 0.3, 0.7, 0.8};
    std::vector<ClassLabel> l{N, N, N, A, A};
    EXPECT_DOUBLE_EQ(auc(s, l), 1.0);
}

TEST(Auc, FullReversalIsZero) {
    std::vector<double> s{0.9, 0.8, 0.3, 0.2};
    std::vector<ClassLabel> l{N, N, A, A};
    EXPECT_DOUBLE_EQ(auc(s, l), 0.0);
}

TEST(Auc, MatchesPairwiseOracleOn200Points) {
    Rng rng = make_rng(11);
    auto inst = random_instance(rng, 200);
    EXPECT_NEAR(auc(inst.scores, inst.labels), pairwise_auc(inst.scores, inst.labels), 1e-9);
}

TEST(Auc, TripleAgreementOnRandomInstances) {
    Rng rng = make_rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = static_cast<std::size_t>(uniform_int(rng, 2, 200));
        auto inst = random_instance(rng, n);
        const double rank = auc(inst.scores, inst.labels);
        const auto curve = roc_curve(inst.scores, inst.labels);
        EXPECT_NEAR(rank, pairwise_auc(inst.scores, inst.labels), 1e-9);
        EXPECT_NEAR(rank, trapezoid_area(curve), 1e-12);
    }
}

TEST(Auc, InvariantUnderIncreasingTransform) {
    Rng rng = make_rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        auto inst = random_instance(rng, 80);
        std::vector<double> t(inst.scores.size());
        std::transform(inst.scores.begin(), inst.scores.end(), t.begin(),
                       [](double x) { return std::exp(3.0 * x) - 7.0; });
        EXPECT_DOUBLE_EQ(auc(inst.scores, inst.labels), auc(t, inst.labels));
    }
}

TEST(Auc, RejectsSingleClass) {
    std::vector<double> s{0.1, 0.2};
    std::vector<ClassLabel> l{N, N};
    EXPECT_THROW(auc(s, l), Error);
}

// =============================================================================
// Confusion counts, NPV, recall
// =============================================================================

TEST(Confusion, SentinelThresholds) {
    std::vector<double> s{0.1, 0.5, 0.9, 0.4};
    std::vector<ClassLabel> l{N, A, A, N};
    auto low = confusion_at(s, l, -1.0);
    EXPECT_EQ(low.tn, 0u);
    EXPECT_EQ(low.fn, 0u);
    auto high = confusion_at(s, l, 2.0);
    EXPECT_EQ(high.tp, 0u);
    EXPECT_EQ(high.fp, 0u);
}

TEST(Confusion, SixPointHandCase) {
    // scores >= 0.5 are predicted abnormal
    std::vector<double> s{0.2, 0.5, 0.7, 0.1, 0.6, 0.4};
    std::vector<ClassLabel> l{N, N, A, A, A, N};
    auto c = confusion_at(s, l, 0.5);
    EXPECT_EQ(c, (Counts{2, 1, 2, 1}));
    auto r = recall_per_class(c);
    EXPECT_DOUBLE_EQ(r.normal_recall, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.abnormal_recall, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(npv(c), 2.0 / 3.0);
}

TEST(Npv, Formula) {
    EXPECT_DOUBLE_EQ(npv(Counts{0, 0, 99, 1}), 0.99);
    EXPECT_DOUBLE_EQ(npv(Counts{3, 2, 10, 0}), 1.0);
    EXPECT_TRUE(std::isnan(npv(Counts{3, 2, 0, 0})));
}

TEST(Recall, Extremes) {
    auto all_correct = recall_per_class(Counts{3, 0, 5, 0});
    EXPECT_DOUBLE_EQ(all_correct.normal_recall, 1.0);
    EXPECT_DOUBLE_EQ(all_correct.abnormal_recall, 1.0);
    auto all_abnormal = recall_per_class(Counts{3, 5, 0, 0});
    EXPECT_DOUBLE_EQ(all_abnormal.normal_recall, 0.0);
    EXPECT_DOUBLE_EQ(all_abnormal.abnormal_recall, 1.0);
}

// =============================================================================
// Specificity at sensitivity
// =============================================================================

TEST(SpecAtSens, PerfectSeparation) {
    std::vector<double> s{0.1, 0.2, 0.3, 0.7, 0.8};
    std::vector<ClassLabel> l{N, N, N, A, A};
    EXPECT_DOUBLE_EQ(specificity_at_sensitivity(s, l, 0.87), 1.0);
}

TEST(SpecAtSens, ReversedScoresAtFullSensitivity) {
    std::vector<double> s{0.9, 0.8, 0.3, 0.2};
    std::vector<ClassLabel> l{N, N, A, A};
    EXPECT_DOUBLE_EQ(specificity_at_sensitivity(s, l, 1.0), 0.0);
}

TEST(SpecAtSens, MatchesExhaustiveScan) {
    Rng rng = make_rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = static_cast<std::size_t>(uniform_int(rng, 2, 200));
        auto inst = random_instance(rng, n);
        for (double level : {0.5, 0.8, 0.87, 1.0})
            EXPECT_EQ(specificity_at_sensitivity(inst.scores, inst.labels, level),
                      scan_specificity(inst.scores, inst.labels, level));
    }
}

TEST(SpecAtSens, NonIncreasingInLevel) {
    Rng rng = make_rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        auto inst = random_instance(rng, 120);
        double prev = 1.0;
        for (int k = 1; k <= 20; ++k) {
            const double v = specificity_at_sensitivity(inst.scores, inst.labels, k / 20.0);
            EXPECT_LE(v, prev);
            prev = v;
        }
    }
}

// =============================================================================
// ROC curve
// =============================================================================

TEST(Roc, PerfectSeparationHasThreePoints) {
    std::vector<double> s{0.1, 0.2, 0.8, 0.9};
    std::vector<ClassLabel> l{N, N, A, A};
    auto c = roc_curve(s, l);
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c[0].fpr, 0.0);
    EXPECT_EQ(c[0].tpr, 0.0);
    EXPECT_TRUE(std::isinf(c[0].threshold));
    EXPECT_EQ(c[1].fpr, 0.0);
    EXPECT_EQ(c[1].tpr, 1.0);
    EXPECT_EQ(c[2].fpr, 1.0);
    EXPECT_EQ(c[2].tpr, 1.0);
}

TEST(Roc, AllEqualScoresGiveChanceDiagonal) {
    std::vector<double> s(10, 0.4);
    std::vector<ClassLabel> l{N, A, N, A, N, N, A, N, N, N};
    auto c = roc_curve(s, l);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c.front().fpr, 0.0);
    EXPECT_EQ(c.front().tpr, 0.0);
    EXPECT_EQ(c.back().fpr, 1.0);
    EXPECT_EQ(c.back().tpr, 1.0);
    EXPECT_DOUBLE_EQ(trapezoid_area(c), 0.5);
}

TEST(Roc, MonotoneFromOriginToCorner) {
    Rng rng = make_rng(31);
    auto inst = random_instance(rng, 150);
    auto c = roc_curve(inst.scores, inst.labels);
    for (std::size_t i = 1; i < c.size(); ++i) {
        EXPECT_GE(c[i].fpr, c[i - 1].fpr);
        EXPECT_GE(c[i].tpr, c[i - 1].tpr);
        EXPECT_LT(c[i].threshold, c[i - 1].threshold);
    }
}

// =============================================================================
// Report
// =============================================================================

TEST(Report, RatesInUnitIntervalAndCountsConsistent) {
    Rng rng = make_rng(41);
    auto inst = random_instance(rng, 90);
    auto r = compute_report(inst.scores, inst.labels, 0.6);
    for (double v : {r.auc, r.normal_recall, r.abnormal_recall, r.spec_at_87, r.spec_at_80}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(r.counts.tp + r.counts.fp + r.counts.tn + r.counts.fn, inst.scores.size());
    EXPECT_EQ(r.threshold_used, 0.6);
    EXPECT_GE(r.spec_at_80, r.spec_at_87);
}
