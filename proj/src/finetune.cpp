#include "sift/finetune.hpp"

#include <algorithm>
#include <cmath>

#include "sift/error.hpp"

namespace sift {

std::string_view to_string(FinetuneMode m) noexcept {
    switch (m) {
        case FinetuneMode::linear_probe: return "linear_probe";
        case FinetuneMode::full: return "full";
        default: return "discriminative";
    }
}

FinetuneMode parse_finetune_mode(std::string_view name) {
    for (auto m : {FinetuneMode::linear_probe, FinetuneMode::full, FinetuneMode::discriminative})
        if (name == to_string(m)) return m;
    throw ConfigError("unknown fine-tune mode '" + std::string(name) + "'");
}

void FinetuneConfig::validate() const {
    if (patch_size < 1) throw ConfigError("finetune: patch_size must be >= 1");
    if (!(eta > 1.0)) throw ConfigError("finetune: eta must be > 1");
    if (!(base_lr > 0.0)) throw ConfigError("finetune: base_lr must be > 0");
    if (epochs < 1 || random_init_epochs < 1) throw ConfigError("finetune: epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("finetune: batch_size must be >= 2");
    if (!(target_batch_ratio > 0.0 && target_batch_ratio < 1.0))
        throw ConfigError("finetune: target_batch_ratio must lie in (0, 1)");
    if (label_window < 0) throw ConfigError("finetune: label_window must be >= 0");
    if (abnormal_draws_per_epoch < 1) throw ConfigError("finetune: abnormal_draws_per_epoch must be >= 1");
    if (max_batches_per_epoch < 0) throw ConfigError("finetune: max_batches_per_epoch must be >= 0");
    if (val_patches < 1) throw ConfigError("finetune: val_patches must be >= 1");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("finetune: flip_prob must lie in [0, 1]");
}

double discriminative_lr(double base_lr, double eta, int block_index_from_output, int n_blocks) {
    if (block_index_from_output < 0 || block_index_from_output >= n_blocks)
        throw Error("discriminative_lr: block index out of range");
    return base_lr / std::pow(eta, block_index_from_output);
}

namespace {

/// Admissible [lo, hi] for a window start on one axis.
std::pair<int, int> axis_range(int extent, int patch, std::optional<std::pair<int, int>> box) {
    int lo = 0, hi = extent - patch;
    if (box) {
        const auto [b0, b1] = *box;  // half-open [b0, b1)
        if (b1 - b0 <= patch) {
            lo = std::max(lo, b1 - patch);
            hi = std::min(hi, b0);
        } else {
            const int c = b0 + (b1 - b0) / 2;
            lo = std::max(lo, c - patch + 1);
            hi = std::min(hi, c);
        }
    }
    if (lo > hi) throw Error("no patch position satisfies the containment rule");
    return {lo, hi};
}

}  // namespace

CropRect sample_patch_window(int height, int width, const std::optional<BBox>& containment, int patch_size, Rng& rng) {
    if (height < patch_size || width < patch_size) throw Error("slice smaller than patch");
    std::optional<std::pair<int, int>> bx, by;
    if (containment) {
        bx = std::pair{containment->x, containment->x1()};
        by = std::pair{containment->y, containment->y1()};
    }
    const auto [xl, xh] = axis_range(width, patch_size, bx);
    const auto [yl, yh] = axis_range(height, patch_size, by);
    const int x0 = static_cast<int>(uniform_int(rng, xl, xh));
    const int y0 = static_cast<int>(uniform_int(rng, yl, yh));
    return {x0, y0, x0 + patch_size, y0 + patch_size};
}

Patch sample_patch(const Image& slice, SliceRef source, ClassLabel label, const std::optional<BBox>& bbox,
                   int patch_size, Rng& rng, bool training) {
    const bool constrained = training && label == ClassLabel::abnormal;
    if (constrained && !bbox) throw Error("abnormal training patch requires a bounding box");

    const Image* frame = &slice;
    Image padded;
    std::optional<BBox> box = constrained ? bbox : std::nullopt;
    if (slice.height < patch_size || slice.width < patch_size) {
        padded = pad_reflect_to(slice, patch_size);
        if (box) {
            box->x += (padded.width - slice.width) / 2;
            box->y += (padded.height - slice.height) / 2;
        }
        frame = &padded;
    }
    const CropRect w = sample_patch_window(frame->height, frame->width, box, patch_size, rng);
    return {{source, w, label}, crop(*frame, w.x0, w.y0, patch_size, patch_size)};
}

BalancedBatchSampler::BalancedBatchSampler(std::span<const ClassLabel> labels, int batch_size, double abnormal_ratio) {
    if (batch_size < 2) throw Error("balanced batches need batch_size >= 2");
    if (!(abnormal_ratio > 0.0 && abnormal_ratio < 1.0)) throw Error("balanced batches: ratio must lie in (0, 1)");
    n_abnormal_per_batch_ = std::clamp(static_cast<int>(std::ceil(batch_size * abnormal_ratio - 1e-9)), 1, batch_size - 1);
    n_normal_per_batch_ = batch_size - n_abnormal_per_batch_;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] == ClassLabel::abnormal ? abnormal_ : normal_).push_back(i);
    if (abnormal_.empty()) throw Error("balanced batches: no abnormal samples");
    if (normal_.empty()) throw Error("balanced batches: no normal samples");
}

std::vector<std::size_t> BalancedBatchSampler::next_batch(Rng& rng) {
    const int n_abn = n_abnormal_per_batch_;
    const int n_norm = n_normal_per_batch_;
    std::vector<std::size_t> batch;
    batch.reserve(static_cast<std::size_t>(n_abn + n_norm));
    for (int i = 0; i < n_abn; ++i)
        batch.push_back(abnormal_[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(abnormal_.size()) - 1))]);
    for (int i = 0; i < n_norm; ++i) {
        if (pool_pos_ == normal_pool_.size()) {
            normal_pool_ = normal_;
            for (std::size_t k = normal_pool_.size(); k > 1; --k)
                std::swap(normal_pool_[k - 1],
                          normal_pool_[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(k - 1)))]);
            pool_pos_ = 0;
        }
        batch.push_back(normal_pool_[pool_pos_++]);
    }
    return batch;
}

std::size_t BalancedBatchSampler::batches_per_epoch(int draws_per_abnormal, int cap) const {
    const auto per_batch = static_cast<std::size_t>(n_abnormal_per_batch_);
    const std::size_t draws = static_cast<std::size_t>(draws_per_abnormal) * abnormal_.size();
    std::size_t n = std::max<std::size_t>(1, (draws + per_batch - 1) / per_batch);
    if (cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
    return n;
}

}  // namespace sift
