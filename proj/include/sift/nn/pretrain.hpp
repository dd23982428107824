#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "sift/contrastive.hpp"
#include "sift/dataset.hpp"
#include "sift/encoder_spec.hpp"
#include "sift/nn/models.hpp"
#include "sift/pair_sampler.hpp"

namespace sift::nn {

struct PretrainEpoch {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;  // at the epoch's first step
    double m = 0.0;
    PairKindCounts pair_counts{};
};

struct PretrainOptions {
    ContrastiveConfig config;
    PairPolicy policy;
    AugmentParams augment;
    EncoderSpec spec;
    std::uint64_t seed = 0;
    int workers = 1;
    std::function<void(const PretrainEpoch&)> on_epoch;
};

struct PretrainResult {
    SiftNet online{nullptr};
    SiftNet momentum{nullptr};
    std::vector<PretrainEpoch> history;
};

/// Batched InfoNCE: row i of `query` against its positive `key` row and every queue row.
/// `negative_mask` (B x S, true = keep) drops queue entries per row; an empty queue leaves
/// only the positive term.
torch::Tensor info_nce_batch(const torch::Tensor& query, const torch::Tensor& key, const torch::Tensor& queue,
                             double temperature, const std::optional<torch::Tensor>& negative_mask = std::nullopt);

PretrainResult pretrain(const StudyManifest& manifest, const PretrainOptions& options);

}  // namespace sift::nn
