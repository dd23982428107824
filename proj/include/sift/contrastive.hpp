#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sift/error.hpp"

namespace sift {

/// Momentum-contrast hyperparameters. Defaults are the full-scale values; desk-scale
/// runs override them from config.
struct ContrastiveConfig {
    double temperature = 0.2;
    double momentum_start = 0.99;  // EMA momentum, cosine-scheduled toward momentum_end
    double momentum_end = 1.0;
    std::size_t queue_size = 4096;
    int epochs = 4000;
    int batch_size = 128;
    double base_lr = 1.5e-2;
    double final_lr = 0.0;
    double sgd_momentum = 0.9;
    double weight_decay = 1e-4;
    /// Optimizer steps per epoch; 0 means one pass over the training slices.
    int steps_per_epoch = 0;
    /// Drop queue keys that are not negatives of the anchor (same volume / other view).
    bool strict_queue_filter = false;

    void validate() const;
};

/// Fixed-capacity FIFO of L2-normalized keys stored in a ring buffer.
class MemoryQueue {
public:
    MemoryQueue(std::size_t capacity, std::size_t dim);

    /// Appends `keys` (row-major, n x dim), evicting the oldest entries once full.
    /// Each key may carry a tag (e.g. a source-volume index) used for optional filtering.
    void enqueue(std::span<const float> keys, std::span<const long> tags = {});

    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] bool full() const noexcept { return size_ == capacity_; }

    /// i-th key counting from the oldest.
    [[nodiscard]] std::span<const float> key(std::size_t i) const;
    [[nodiscard]] long tag(std::size_t i) const;

    /// Keys oldest-to-newest, row-major.
    [[nodiscard]] std::vector<float> ordered() const;
    /// Raw storage rows [0, size()) in slot order (not FIFO order); loss is order-invariant.
    [[nodiscard]] std::span<const float> storage() const noexcept { return {data_.data(), size_ * dim_}; }
    [[nodiscard]] std::span<const long> storage_tags() const noexcept { return {tags_.data(), size_}; }

private:
    std::size_t capacity_;
    std::size_t dim_;
    std::size_t size_ = 0;
    std::size_t cursor_ = 0;  // next slot to write
    std::vector<float> data_;
    std::vector<long> tags_;
};

/// -log( exp(q.k+/tau) / sum_i exp(q.k_i/tau) ), the sum running over the positive and
/// every negative (`negatives` is row-major, n x dim). Stable log-sum-exp in double.
double info_nce_loss(std::span<const float> query, std::span<const float> positive, std::span<const float> negatives,
                     double temperature);

/// theta' <- m * theta' + (1 - m) * theta, elementwise.
template <typename T>
void ema_update(std::span<T> momentum_params, std::span<const T> online_params, double m) {
    if (momentum_params.size() != online_params.size()) throw Error("ema_update: parameter structure mismatch");
    if (!(m >= 0.0 && m <= 1.0)) throw Error("ema_update: momentum must lie in [0, 1]");
    const T mm = static_cast<T>(m), om = static_cast<T>(1.0 - m);
    for (std::size_t i = 0; i < momentum_params.size(); ++i)
        momentum_params[i] = mm * momentum_params[i] + om * online_params[i];
}

/// end + (start - end) * (1 + cos(pi * step / total)) / 2.
double cosine_schedule(long step, long total_steps, double start, double end);

}  // namespace sift
