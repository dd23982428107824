#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sift/dataset.hpp"
#include "sift/image.hpp"
#include "sift/preprocess.hpp"
#include "sift/rng.hpp"

namespace sift {

enum class FinetuneMode { linear_probe, full, discriminative };
std::string_view to_string(FinetuneMode m) noexcept;
FinetuneMode parse_finetune_mode(std::string_view name);

enum class InitKind { pretrained, random };

struct FinetuneConfig {
    int patch_size = 448;
    FinetuneMode mode = FinetuneMode::discriminative;
    double base_lr = 1e-2;
    double eta = 2.8;
    int epochs = 50;
    /// Epoch count used instead of `epochs` when starting from random weights.
    int random_init_epochs = 100;
    int batch_size = 32;
    double target_batch_ratio = 0.5;
    double sgd_momentum = 0.9;
    double weight_decay = 1e-4;
    int label_window = 9;
    /// Expected number of draws of each abnormal slice per epoch.
    int abnormal_draws_per_epoch = 4;
    /// 0 = uncapped.
    int max_batches_per_epoch = 0;
    /// Patches per slice when scoring the validation split for model selection.
    int val_patches = 1;
    double flip_prob = 0.5;  // horizontal flip of training patches; hides laterality
    bool exclude_abnormal_volumes_from_normals = false;

    void validate() const;
};

/// base_lr / eta^j, with j = 0 the output-side block.
double discriminative_lr(double base_lr, double eta, int block_index_from_output, int n_blocks);

struct PatchSample {
    SliceRef source;
    CropRect window;  // in the (possibly reflect-padded) slice frame
    ClassLabel label = ClassLabel::normal;
};

struct Patch {
    PatchSample sample;
    Image pixels;
};

/// Uniform window position over an h x w frame. With `containment`, each axis is
/// restricted to windows covering the box extent, or its centre when the box is
/// longer than the patch on that axis.
CropRect sample_patch_window(int height, int width, const std::optional<BBox>& containment, int patch_size, Rng& rng);

/// Reflect-pads small slices, then samples one patch. Abnormal training patches must
/// cover the annotated box; test-time sampling (`training = false`) is unconstrained.
Patch sample_patch(const Image& slice, SliceRef source, ClassLabel label, const std::optional<BBox>& bbox,
                   int patch_size, Rng& rng, bool training);

/// Class-balanced batches: ceil(B * ratio) abnormal indices drawn with replacement
/// (ceil(B/2) at the default ratio) and the rest normal, drawn without replacement
/// from a pool that is reshuffled when exhausted.
class BalancedBatchSampler {
public:
    BalancedBatchSampler(std::span<const ClassLabel> labels, int batch_size, double abnormal_ratio = 0.5);

    [[nodiscard]] std::vector<std::size_t> next_batch(Rng& rng);

    /// Batches needed to draw each abnormal index `draws_per_abnormal` times in expectation.
    [[nodiscard]] std::size_t batches_per_epoch(int draws_per_abnormal, int cap = 0) const;
    [[nodiscard]] std::size_t n_abnormal() const noexcept { return abnormal_.size(); }
    [[nodiscard]] std::size_t n_normal() const noexcept { return normal_.size(); }

private:
    std::vector<std::size_t> abnormal_;
    std::vector<std::size_t> normal_;
    std::vector<std::size_t> normal_pool_;
    std::size_t pool_pos_ = 0;
    int n_abnormal_per_batch_;
    int n_normal_per_batch_;
};

}  // namespace sift
