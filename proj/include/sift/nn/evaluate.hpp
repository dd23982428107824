#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "sift/aggregate.hpp"
#include "sift/dataset.hpp"
#include "sift/image.hpp"
#include "sift/nn/models.hpp"
#include "sift/rng.hpp"
#include "sift/volume_cache.hpp"

namespace sift::nn {

struct EvaluateOptions {
    int n_patches = 20;
    int patch_size = 448;
    int label_window = 9;
    std::uint64_t seed = 0;
    int workers = 1;
    int batch_size = 128;
};

/// Softmax abnormal-class probability for each patch.
std::vector<double> patch_probabilities(SiftNetImpl& net, std::span<const Image> patches, int batch_size = 128);

/// Mean abnormal probability over n unconstrained random patches.
double score_slice(SiftNetImpl& net, const Image& slice, int n_patches, int patch_size, Rng& rng);

/// Scores every slice of every volume; deterministic in the seed and independent of
/// worker count (each slice draws from its own stream).
ScoreTable evaluate(SiftNetImpl& net, const VolumeCache& volumes, const EvaluateOptions& options);

/// Evaluates every N in `counts` from one set of max(counts) draws per slice: the
/// score for N is the mean of the first N patch probabilities.
std::map<int, ScoreTable> evaluate_sweep(SiftNetImpl& net, const VolumeCache& volumes, const EvaluateOptions& options,
                                         std::span<const int> counts);

}  // namespace sift::nn
