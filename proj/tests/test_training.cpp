#include <gtest/gtest.h>

#include <torch/torch.h>

#include <cmath>
#include <numeric>

#include "sift/nn/evaluate.hpp"
#include "sift/nn/finetune_train.hpp"
#include "sift/nn/models.hpp"
#include "sift/nn/pretrain.hpp"
#include "sift/synthetic.hpp"
#include "sift/volume_cache.hpp"
#include "test_util.hpp"

using namespace sift;
using namespace sift::nn;

namespace {

EncoderSpec tiny_spec() {
    EncoderSpec s;
    s.input_height = s.input_width = 32;
    s.embedding_dim = 8;
    s.width = 4;
    return s;
}

// One small synthetic dataset shared by every test in this file.
class TinyData : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new test::TempDir;
        SynthConfig c;
        c.n_patients = 8;
        c.abnormal_fraction = 0.25;
        c.slices_per_volume = 8;
        c.slice_height = c.slice_width = 64;
        c.lesion_radius_min = 3.0;
        c.lesion_radius_max = 5.0;
        c.lesion_z_extent = 3;
        c.seed = 11;
        manifest_ = new StudyManifest(generate_dataset(c, dir_->path(), 1));
        auto s = split_subjectwise(*manifest_, SplitSpec{0.5, 0.25, 0.25, 1, true});
        train_ = new StudyManifest(std::move(s.train));
        val_ = new StudyManifest(std::move(s.val));
    }
    static void TearDownTestSuite() {
        delete train_;
        delete val_;
        delete manifest_;
        delete dir_;
    }

    static PretrainOptions pretrain_options() {
        PretrainOptions o;
        o.config.queue_size = 64;
        o.config.epochs = 2;
        o.config.batch_size = 16;
        o.config.steps_per_epoch = 2;
        o.config.base_lr = 0.003;
        o.policy.k = 2;
        o.augment.output_size = 32;
        o.augment.blur_prob = 0.0;
        o.spec = tiny_spec();
        o.seed = 5;
        return o;
    }

    static FinetuneOptions finetune_options(FinetuneMode mode) {
        FinetuneOptions o;
        o.init = InitKind::random;
        o.spec = tiny_spec();
        o.config.patch_size = 32;
        o.config.mode = mode;
        o.config.epochs = 1;
        o.config.random_init_epochs = 1;
        o.config.batch_size = 8;
        o.config.label_window = 1;
        o.config.max_batches_per_epoch = 2;
        o.seed = 9;
        return o;
    }

    static test::TempDir* dir_;
    static StudyManifest* manifest_;
    static StudyManifest* train_;
    static StudyManifest* val_;
};

test::TempDir* TinyData::dir_ = nullptr;
StudyManifest* TinyData::manifest_ = nullptr;
StudyManifest* TinyData::train_ = nullptr;
StudyManifest* TinyData::val_ = nullptr;

bool same_weights(torch::nn::Module& a, torch::nn::Module& b) {
    auto pa = a.parameters(), pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i)
        if (!torch::equal(pa[i], pb[i])) return false;
    return true;
}

EvaluateOptions eval_options(int n) {
    EvaluateOptions e;
    e.n_patches = n;
    e.patch_size = 32;
    e.label_window = 1;
    e.seed = 3;
    return e;
}

}  // namespace

// =============================================================================
// Pre-training
// =============================================================================

TEST_F(TinyData, PretrainIsDeterministic) {
    auto a = pretrain(*train_, pretrain_options());
    auto b = pretrain(*train_, pretrain_options());
    ASSERT_EQ(a.history.size(), 2u);
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        EXPECT_EQ(a.history[e].mean_loss, b.history[e].mean_loss);
        EXPECT_EQ(a.history[e].pair_counts, b.history[e].pair_counts);
    }
    EXPECT_TRUE(same_weights(*a.online, *b.online));
    EXPECT_TRUE(same_weights(*a.momentum, *b.momentum));
}

TEST_F(TinyData, PretrainHistoryIsWellFormed) {
    auto o = pretrain_options();
    auto r = pretrain(*train_, o);
    for (const auto& e : r.history) {
        EXPECT_TRUE(std::isfinite(e.mean_loss));
        EXPECT_GT(e.mean_loss, 0.0);
        EXPECT_GE(e.m, o.config.momentum_start);
        EXPECT_LE(e.m, o.config.momentum_end);
        EXPECT_EQ(std::accumulate(e.pair_counts.begin(), e.pair_counts.end(), std::size_t{0}),
                  static_cast<std::size_t>(o.config.batch_size * o.config.steps_per_epoch));
    }
    EXPECT_LE(r.history[1].lr, r.history[0].lr);
    // Momentum weights stay gradient-free.
    for (const auto& p : r.momentum->parameters()) EXPECT_FALSE(p.requires_grad());
}

TEST(InfoNceBatch, IndependentEmbeddingsGiveChanceLoss) {
    // Queries unrelated to their keys and to the queue: the loss sits near ln(S + 1).
    torch::manual_seed(12);
    auto unit = [](torch::Tensor t) {
        return torch::nn::functional::normalize(t, torch::nn::functional::NormalizeFuncOptions().dim(1));
    };
    const int S = 256;
    auto q = unit(torch::randn({64, 128}, torch::kFloat64));
    auto k = unit(torch::randn({64, 128}, torch::kFloat64));
    auto queue = unit(torch::randn({S, 128}, torch::kFloat64));
    const double loss = info_nce_batch(q, k, queue, 0.2).item<double>();
    EXPECT_NEAR(loss, std::log(S + 1.0), 0.05 * std::log(S + 1.0));
}

// =============================================================================
// Fine-tuning
// =============================================================================

TEST_F(TinyData, FinetuneIsDeterministic) {
    auto a = finetune(*train_, *val_, finetune_options(FinetuneMode::discriminative));
    auto b = finetune(*train_, *val_, finetune_options(FinetuneMode::discriminative));
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
    EXPECT_TRUE(same_weights(*a.net, *b.net));
}

TEST_F(TinyData, LinearProbeLeavesEncoderBitIdentical) {
    auto o = finetune_options(FinetuneMode::linear_probe);
    o.config.epochs = o.config.random_init_epochs = 2;
    auto initial = make_classifier(o);
    auto r = finetune(*train_, *val_, o);
    auto before = initial->encoder->named_parameters();
    for (const auto& item : r.net->encoder->named_parameters())
        EXPECT_TRUE(torch::equal(item.value(), before[item.key()])) << item.key();
    auto before_buffers = initial->encoder->named_buffers();
    for (const auto& item : r.net->encoder->named_buffers())
        EXPECT_TRUE(torch::equal(item.value(), before_buffers[item.key()])) << item.key();
    // The head does move.
    EXPECT_FALSE(same_weights(*initial->head, *r.net->head));
}

TEST_F(TinyData, DiscriminativeFinetuneMovesEveryBlock) {
    auto o = finetune_options(FinetuneMode::discriminative);
    auto initial = make_classifier(o);
    auto r = finetune(*train_, *val_, o);
    auto before = block_partition(*initial), after = block_partition(*r.net);
    for (std::size_t b = 0; b < before.size(); ++b) {
        bool moved = false;
        for (std::size_t i = 0; i < before.blocks[b].size(); ++i)
            moved = moved || !torch::equal(before.blocks[b][i], after.blocks[b][i]);
        EXPECT_TRUE(moved) << before.names[b];
    }
}

TEST_F(TinyData, PretrainedInitTakesEncoderFromCheckpoint) {
    test::TempDir ckpt;
    auto pre = pretrain(*train_, pretrain_options());
    CheckpointManifest man;
    man.spec = tiny_spec();
    man.phase = "pretrain";
    save_checkpoint(*pre.online, man, ckpt.path());
    auto o = finetune_options(FinetuneMode::discriminative);
    o.init = InitKind::pretrained;
    o.checkpoint = ckpt.path();
    auto r = finetune(*train_, *val_, o);
    for (const auto& name : r.unmatched) EXPECT_EQ(name.rfind("head.", 0), 0u) << name;
}

// =============================================================================
// Evaluation
// =============================================================================

class TinyEval : public TinyData {
protected:
    void SetUp() override {
        torch::manual_seed(13);
        net_ = build_network(tiny_spec(), HeadKind::classifier);
        net_->eval();
    }
    SiftNet net_{nullptr};
};

TEST_F(TinyEval, CoversEverySliceDeterministically) {
    const VolumeCache cache(*val_);
    auto a = evaluate(*net_, cache, eval_options(3));
    auto b = evaluate(*net_, cache, eval_options(3));
    EXPECT_EQ(a.slices, b.slices);
    EXPECT_EQ(a.volumes, b.volumes);
    EXPECT_EQ(a.slices.size(), val_->total_slices());
    EXPECT_EQ(a.volumes.size(), val_->entries.size());
    for (const auto& s : a.slices) {
        EXPECT_GE(s.score, 0.0);
        EXPECT_LE(s.score, 1.0);
    }
}

TEST_F(TinyEval, IndependentOfWorkerCount) {
    const VolumeCache cache(*val_);
    auto one = eval_options(2);
    auto three = eval_options(2);
    three.workers = 3;
    EXPECT_EQ(evaluate(*net_, cache, one).slices, evaluate(*net_, cache, three).slices);
}

TEST_F(TinyEval, SweepAgreesWithSingleEvaluation) {
    const VolumeCache cache(*val_);
    const std::vector<int> counts = {1, 4};
    auto sweep = evaluate_sweep(*net_, cache, eval_options(4), counts);
    auto single = evaluate(*net_, cache, eval_options(4));
    ASSERT_EQ(sweep.at(4).slices.size(), single.slices.size());
    for (std::size_t i = 0; i < single.slices.size(); ++i)
        EXPECT_NEAR(sweep.at(4).slices[i].score, single.slices[i].score, 1e-12);
}

TEST_F(TinyEval, MorePatchesReduceScoreVariance) {
    // Repeated scoring of the same slices: the spread across repeats shrinks with N.
    const VolumeCache cache(*val_);
    Rng rng = make_rng(21);
    double var1 = 0.0, var20 = 0.0;
    int slices = 0;
    for (std::size_t v = 0; v < val_->entries.size() && slices < 50; ++v)
        for (int z = 0; z < val_->entries[v].n_slices && slices < 50; ++z, ++slices) {
            const auto& img = cache.slice({v, z});
            for (int n : {1, 20}) {
                double s = 0.0, ss = 0.0;
                for (int r = 0; r < 6; ++r) {
                    const double x = score_slice(*net_, img, n, 32, rng);
                    s += x;
                    ss += x * x;
                }
                const double var = ss / 6 - (s / 6) * (s / 6);
                (n == 1 ? var1 : var20) += var;
            }
        }
    EXPECT_LT(var20, var1);
}
