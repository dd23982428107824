#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <map>
#include <numeric>

#include "sift/image.hpp"
#include "sift/pair_sampler.hpp"
#include "sift/preprocess.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace sift;
using oracle::chi_square_p;

namespace {

Image gradient_image(int h, int w) {
    Image img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.at(y, x) = static_cast<float>(0.2 + 0.6 * (x + 2 * y) / (w + 2.0 * h));
    return img;
}

}  // namespace

// =============================================================================
// Positive sampling
// =============================================================================

TEST(PairSampler, ViewBranchPicksOtherViewOfSameSide) {
    auto m = test::four_view_manifest(3, 64);
    PairPolicy p{PairPolicyKind::sift, 1.0, 9};
    PairSampler sampler(m, p);
    Rng rng = make_rng(1);
    const std::size_t anchor_vol = 4;  // P1 L CC
    ASSERT_EQ(m.entries[anchor_vol].view, View::CC);
    for (int i = 0; i < 500; ++i) {
        auto s = sampler.sample({anchor_vol, 12}, rng);
        const auto& pos = m.entries[s.positive.volume];
        EXPECT_EQ(s.pair_kind, PairKind::inter_view);
        EXPECT_EQ(pos.patient_id, "P1");
        EXPECT_EQ(pos.laterality, Laterality::L);
        EXPECT_EQ(pos.view, View::MLO);
        EXPECT_GE(s.positive.slice_index, 0);
        EXPECT_LT(s.positive.slice_index, 64);
    }
}

TEST(PairSampler, SliceBranchStaysWithinKAndSkipsAnchor) {
    auto m = test::four_view_manifest(1, 64);
    PairSampler sampler(m, {PairPolicyKind::sift, 0.0, 9});
    Rng rng = make_rng(2);
    for (int i = 0; i < 2000; ++i) {
        auto s = sampler.sample({0, 30}, rng);
        EXPECT_EQ(s.pair_kind, PairKind::inter_slice);
        EXPECT_EQ(s.positive.volume, 0u);
        EXPECT_GE(s.positive.slice_index, 21);
        EXPECT_LE(s.positive.slice_index, 39);
        EXPECT_NE(s.positive.slice_index, 30);
    }
}

TEST(PairSampler, EdgeAnchorsResampleInsteadOfClamping) {
    auto m = test::four_view_manifest(1, 24);
    PairSampler sampler(m, {PairPolicyKind::inter_slice_only, 0.5, 9});
    Rng rng = make_rng(3);
    std::array<double, 9> hist{};
    const int draws = 9000;
    for (int i = 0; i < draws; ++i) {
        auto s = sampler.sample({0, 0}, rng);
        ASSERT_GE(s.positive.slice_index, 1);
        ASSERT_LE(s.positive.slice_index, 9);
        hist[static_cast<std::size_t>(s.positive.slice_index - 1)] += 1;
    }
    EXPECT_GT(chi_square_p(hist, draws / 9.0), 0.01);
}

TEST(PairSampler, SiftPolicyDistribution) {
    auto m = test::four_view_manifest(2, 64);
    PairSampler sampler(m, {PairPolicyKind::sift, 0.5, 9});
    Rng rng = make_rng(4);
    const int draws = 10000;
    int inter_view = 0;
    std::array<double, 18> offsets{};
    int violations = 0;
    for (int i = 0; i < draws; ++i) {
        const SliceRef anchor{static_cast<std::size_t>(uniform_int(rng, 0, 7)), 32};
        auto s = sampler.sample(anchor, rng);
        if (is_negative(anchor, s.positive, m)) ++violations;
        if (s.pair_kind == PairKind::inter_view) {
            ++inter_view;
        } else {
            ASSERT_EQ(s.pair_kind, PairKind::inter_slice);
            const int d = s.positive.slice_index - anchor.slice_index;
            offsets[static_cast<std::size_t>(d < 0 ? d + 9 : d + 8)] += 1;
        }
    }
    EXPECT_NEAR(inter_view / static_cast<double>(draws), 0.5, 0.015);
    const double n_slice = draws - inter_view;
    EXPECT_GT(chi_square_p(offsets, n_slice / 18.0), 0.01);
    EXPECT_EQ(violations, 0);
}

TEST(PairSampler, MissingOtherViewFallsBackToNeighbour) {
    StudyManifest m;
    m.entries.push_back(test::make_record("P0", "S0", Laterality::L, View::CC, 24));
    PairSampler sampler(m, {PairPolicyKind::sift, 1.0, 9});
    Rng rng = make_rng(5);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sampler.sample({0, 10}, rng).pair_kind, PairKind::inter_slice);
    EXPECT_FALSE(sampler.other_view(0).has_value());
}

TEST(PairSampler, SameImageOnlyReturnsAnchor) {
    auto m = test::four_view_manifest(1);
    PairSampler sampler(m, {PairPolicyKind::same_image_only, 0.5, 9});
    Rng rng = make_rng(6);
    auto s = sampler.sample({2, 7}, rng);
    EXPECT_EQ(s.positive, (SliceRef{2, 7}));
    EXPECT_EQ(s.pair_kind, PairKind::same_slice);
}

TEST(PairSampler, SamePatientAnyCanEmitMetadataNegatives) {
    // Two studies of one patient: the same-patient policy may pair across sides and
    // time points, which the metadata policy treats as negatives.
    StudyManifest m;
    for (const char* study : {"S0", "S1"})
        for (auto lat : {Laterality::L, Laterality::R})
            for (auto view : {View::CC, View::MLO}) m.entries.push_back(test::make_record("P0", study, lat, view, 10));
    PairSampler medaug(m, {PairPolicyKind::same_patient_any, 0.5, 9});
    PairSampler sift_sampler(m, {PairPolicyKind::sift, 0.5, 9});
    Rng rng = make_rng(7);
    int medaug_neg = 0, sift_neg = 0;
    for (int i = 0; i < 2000; ++i) {
        const SliceRef a{static_cast<std::size_t>(uniform_int(rng, 0, 7)), static_cast<int>(uniform_int(rng, 0, 9))};
        if (is_negative(a, medaug.sample(a, rng).positive, m)) ++medaug_neg;
        if (is_negative(a, sift_sampler.sample(a, rng).positive, m)) ++sift_neg;
    }
    EXPECT_GT(medaug_neg, 0);
    EXPECT_EQ(sift_neg, 0);
}

TEST(PairSampler, DeterministicForSeed) {
    auto m = test::four_view_manifest(3, 30);
    PairSampler sampler(m, {PairPolicyKind::sift, 0.5, 9});
    auto run = [&] {
        Rng rng = make_rng(99);
        std::vector<std::pair<std::size_t, int>> out;
        for (int i = 0; i < 200; ++i) {
            auto s = sampler.sample({static_cast<std::size_t>(i % 12), i % 30}, rng);
            out.emplace_back(s.positive.volume, s.positive.slice_index);
        }
        return out;
    };
    EXPECT_EQ(run(), run());
}

TEST(PairPolicy, Validation) {
    PairPolicy p;
    EXPECT_NO_THROW(p.validate());
    p.view_prob = 1.5;
    EXPECT_THROW(p.validate(), ConfigError);
    p = PairPolicy{};
    p.k = 0;
    EXPECT_THROW(p.validate(), ConfigError);
    EXPECT_EQ(parse_pair_policy("same_patient_any"), PairPolicyKind::same_patient_any);
    EXPECT_THROW(parse_pair_policy("nope"), Error);
}

// =============================================================================
// Negatives
// =============================================================================

TEST(IsNegative, MetadataRules) {
    StudyManifest m;
    m.entries.push_back(test::make_record("P0", "S0", Laterality::L, View::CC));   // 0
    m.entries.push_back(test::make_record("P0", "S0", Laterality::L, View::MLO));  // 1
    m.entries.push_back(test::make_record("P0", "S0", Laterality::R, View::CC));   // 2
    m.entries.push_back(test::make_record("P0", "S1", Laterality::L, View::CC));   // 3
    m.entries.push_back(test::make_record("P1", "S0", Laterality::L, View::CC));   // 4
    EXPECT_FALSE(is_negative({0, 5}, {0, 6}, m));
    EXPECT_FALSE(is_negative({0, 5}, {1, 20}, m));
    EXPECT_TRUE(is_negative({0, 5}, {2, 5}, m));
    EXPECT_TRUE(is_negative({0, 5}, {3, 5}, m));
    EXPECT_TRUE(is_negative({0, 5}, {4, 5}, m));
}

// =============================================================================
// Augmentation
// =============================================================================

TEST(Augment, IdentityParametersGiveResizedInput) {
    const Image img = gradient_image(40, 56);
    AugmentParams p{1.0, 1.0, 0.0, 0.0, 0.0, 32};
    Rng rng = make_rng(8);
    for (int i = 0; i < 20; ++i) EXPECT_EQ(augment(img, p, rng), resize_bilinear(img, 32, 32));
}

TEST(Augment, FlipIsAnInvolution) {
    const Image img = gradient_image(13, 17);
    EXPECT_NE(flip_horizontal(img), img);
    EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
}

TEST(Augment, JitterKeepsMeanWithin25Percent) {
    const Image img = gradient_image(64, 64);
    const double mean_in = std::accumulate(img.pixels.begin(), img.pixels.end(), 0.0) / img.pixels.size();
    AugmentParams p{1.0, 1.0, 0.2, 0.0, 0.0, 64};
    Rng rng = make_rng(9);
    for (int i = 0; i < 1000; ++i) {
        auto out = augment(img, p, rng);
        const double mean_out = std::accumulate(out.pixels.begin(), out.pixels.end(), 0.0) / out.pixels.size();
        EXPECT_NEAR(mean_out, mean_in, 0.25 * mean_in);
    }
}

TEST(Augment, OutputShapeAndRange) {
    const Image img = gradient_image(100, 80);
    AugmentParams p;
    p.output_size = 48;
    Rng rng = make_rng(10);
    for (int i = 0; i < 50; ++i) {
        auto out = augment(img, p, rng);
        EXPECT_EQ(out.height, 48);
        EXPECT_EQ(out.width, 48);
        for (float v : out.pixels) {
            EXPECT_GE(v, 0.0f);
            EXPECT_LE(v, 1.0f);
        }
    }
}

TEST(Augment, RejectsTooSmallInput) {
    AugmentParams p;
    p.output_size = 64;
    Rng rng = make_rng(11);
    EXPECT_THROW(augment(gradient_image(32, 32), p, rng), Error);
}
