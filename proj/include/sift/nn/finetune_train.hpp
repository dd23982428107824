#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sift/dataset.hpp"
#include "sift/encoder_spec.hpp"
#include "sift/finetune.hpp"
#include "sift/nn/models.hpp"

namespace sift::nn {

/// SGD with one parameter group per block of the partition (shallowest first, head last).
/// `base_lrs` holds each group's unscheduled learning rate; linear probing keeps only
/// the head group and freezes the encoder.
struct FinetuneOptimizer {
    std::unique_ptr<torch::optim::SGD> optimizer;
    std::vector<double> base_lrs;
    std::vector<std::string> names;
};

FinetuneOptimizer make_finetune_optimizer(SiftNetImpl& net, const FinetuneConfig& config);

struct FinetuneEpoch {
    int epoch = 0;
    double train_loss = 0.0;
    double val_auc = 0.0;  // NaN when validation lacks a class
    double lr_scale = 0.0;
};

struct FinetuneOptions {
    FinetuneConfig config;
    InitKind init = InitKind::pretrained;
    std::optional<std::filesystem::path> checkpoint;  // required for pretrained init
    EncoderSpec spec;                                  // used for random init
    std::uint64_t seed = 0;
    int workers = 1;
    std::function<void(const FinetuneEpoch&)> on_epoch;
};

struct FinetuneResult {
    SiftNet net{nullptr};  // best-validation weights
    std::vector<FinetuneEpoch> history;
    int best_epoch = 0;
    double best_val_auc = 0.0;
    std::vector<std::string> unmatched;  // parameters not taken from the checkpoint
};

/// Builds the classifier for fine-tuning; from a checkpoint, only head parameters may
/// be left unmatched.
SiftNet make_classifier(const FinetuneOptions& options, std::vector<std::string>* unmatched = nullptr);

FinetuneResult finetune(const StudyManifest& train, const StudyManifest& val, const FinetuneOptions& options);

}  // namespace sift::nn
