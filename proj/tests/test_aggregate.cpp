#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "sift/aggregate.hpp"
#include "sift/error.hpp"
#include "sift/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace sift;
using oracle::scan_threshold;

namespace {

constexpr auto N = ClassLabel::normal;
constexpr auto A = ClassLabel::abnormal;

}  // namespace

// =============================================================================
// Slice and volume scores
// =============================================================================

TEST(SliceScore, MeanOfPatchProbabilities) {
    std::vector<double> one{0.73};
    EXPECT_DOUBLE_EQ(mean_probability(one), 0.73);
    std::vector<double> three{0.2, 0.4, 0.6};
    EXPECT_NEAR(mean_probability(three), 0.4, 1e-15);
}

TEST(VolumeScore, MaxOfSliceScores) {
    std::vector<double> a{0.1, 0.9, 0.3};
    EXPECT_EQ(score_volume(a), 0.9);
    std::vector<double> b{0.5};
    EXPECT_EQ(score_volume(b), 0.5);
    std::vector<double> c(7, 0.2);
    EXPECT_EQ(score_volume(c), 0.2);
}

TEST(VolumeScore, MonotoneInEverySlice) {
    Rng rng = make_rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> s(static_cast<std::size_t>(uniform_int(rng, 1, 30)));
        for (auto& x : s) x = uniform01(rng);
        const double before = score_volume(s);
        auto i = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(s.size()) - 1));
        s[i] += uniform01(rng) * (1.0 - s[i]);
        EXPECT_GE(score_volume(s), before);
        EXPECT_EQ(score_volume(s), *std::max_element(s.begin(), s.end()));
    }
}

TEST(Rollup, VolumeScoreIsExactMaxAndLabelComesFromRecord) {
    auto abnormal = test::make_record("P1", "S0", Laterality::L, View::CC, 3, Annotation{1, {2, 2, 4, 4}});
    auto normal = test::make_record("P1", "S0", Laterality::R, View::CC, 2);
    ScoreTable t;
    t.slices = {{normal.volume_id(), 1, 0.3, N},
                {abnormal.volume_id(), 2, 0.8, N},
                {abnormal.volume_id(), 0, 0.1, N},
                {normal.volume_id(), 0, 0.6, N},
                {abnormal.volume_id(), 1, 0.95, A}};
    std::vector<VolumeRecord> records{abnormal, normal};
    rollup_volumes(t, records);
    t.sort();
    ASSERT_EQ(t.volumes.size(), 2u);
    EXPECT_EQ(t.volumes[0].volume_id, abnormal.volume_id());
    EXPECT_EQ(t.volumes[0].score, 0.95);
    EXPECT_EQ(t.volumes[0].label, A);
    EXPECT_EQ(t.volumes[1].score, 0.6);
    EXPECT_EQ(t.volumes[1].label, N);
    EXPECT_EQ(t.slices.front().volume_id, abnormal.volume_id());
    EXPECT_EQ(t.slices.front().slice_index, 0);
}

TEST(ScoreTableIo, RoundTripsThroughCsv) {
    test::TempDir dir;
    ScoreTable t;
    t.slices = {{"a", 0, 0.125, N}, {"a", 1, 0.5, A}, {"b", 0, 0.25, N}};
    t.volumes = {{"a", 0.5, A}, {"b", 0.25, N}};
    write_slice_scores(t, dir / "scores.csv");
    write_volume_scores(t, dir / "volumes.csv");
    auto back = read_score_table(dir / "scores.csv", dir / "volumes.csv");
    EXPECT_EQ(back.slices, t.slices);
    EXPECT_EQ(back.volumes, t.volumes);
}

// =============================================================================
// Threshold selection
// =============================================================================

TEST(SelectThreshold, SeparatedScoresPickLowestZeroGapCandidate) {
    std::vector<double> s{0.1, 0.2, 0.25, 0.35, 0.5, 0.9};
    std::vector<ClassLabel> l{N, N, N, A, A, A};
    const double t = select_threshold(s, l);
    EXPECT_DOUBLE_EQ(t, 0.3);
    auto c = confusion_at(s, l, t);
    EXPECT_EQ(c, (Counts{3, 0, 3, 0}));
}

TEST(SelectThreshold, FourPointCaseMatchesScan) {
    std::vector<double> s{0.1, 0.4, 0.6, 0.9};
    std::vector<ClassLabel> l{N, A, N, A};
    EXPECT_EQ(select_threshold(s, l), scan_threshold(s, l));
}

TEST(SelectThreshold, IdenticalScoresPreferAllNormalSentinel) {
    std::vector<double> s(6, 0.4);
    std::vector<ClassLabel> l{N, A, N, N, A, N};
    const double t = select_threshold(s, l);
    EXPECT_GT(t, 0.4);
    EXPECT_EQ(t, scan_threshold(s, l));
}

TEST(SelectThreshold, MatchesExhaustiveScanOnRandomInstances) {
    Rng rng = make_rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        const auto n = static_cast<std::size_t>(uniform_int(rng, 2, 120));
        auto labels = test::random_labels(rng, n, 0.25);
        std::vector<double> s(n);
        const bool coarse = bernoulli(rng, 0.5);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = uniform01(rng) + (labels[i] == A ? 0.2 : 0.0);
            s[i] = coarse ? std::round(v * 8.0) / 8.0 : v;
        }
        EXPECT_EQ(select_threshold(s, labels), scan_threshold(s, labels));
    }
}

TEST(SelectThreshold, RejectsSingleClass) {
    std::vector<double> s{0.1, 0.2};
    std::vector<ClassLabel> l{A, A};
    EXPECT_THROW(select_threshold(s, l), Error);
}
