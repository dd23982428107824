#include "sift/contrastive.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <string>

namespace sift {

void ContrastiveConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("pretrain: temperature must be > 0");
    if (!(momentum_start >= 0.0 && momentum_start <= 1.0 && momentum_end >= 0.0 && momentum_end <= 1.0))
        throw ConfigError("pretrain: momentum must lie in [0, 1]");
    if (queue_size < 1) throw ConfigError("pretrain: queue_size must be >= 1");
    if (epochs < 1) throw ConfigError("pretrain: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");
    if (static_cast<std::size_t>(batch_size) > queue_size) throw ConfigError("pretrain: batch_size exceeds queue_size");
    if (!(base_lr > 0.0)) throw ConfigError("pretrain: base_lr must be > 0");
    if (steps_per_epoch < 0) throw ConfigError("pretrain: steps_per_epoch must be >= 0");
}

MemoryQueue::MemoryQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), data_(capacity * dim), tags_(capacity, -1) {
    if (capacity == 0 || dim == 0) throw Error("MemoryQueue: capacity and dim must be positive");
}

void MemoryQueue::enqueue(std::span<const float> keys, std::span<const long> tags) {
    if (keys.size() % dim_ != 0) throw Error("MemoryQueue: key dimension mismatch");
    const std::size_t n = keys.size() / dim_;
    if (n > capacity_) throw Error("MemoryQueue: batch of " + std::to_string(n) + " exceeds capacity " +
                                   std::to_string(capacity_));
    if (!tags.empty() && tags.size() != n) throw Error("MemoryQueue: tag count mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = keys.subspan(i * dim_, dim_);
        double norm2 = 0.0;
        for (float v : row) norm2 += static_cast<double>(v) * v;
        if (std::abs(std::sqrt(norm2) - 1.0) > 1e-3) throw Error("MemoryQueue: keys must be L2-normalized");
        std::copy(row.begin(), row.end(), data_.begin() + static_cast<std::ptrdiff_t>(cursor_ * dim_));
        tags_[cursor_] = tags.empty() ? -1 : tags[i];
        cursor_ = (cursor_ + 1) % capacity_;
        size_ = std::min(size_ + 1, capacity_);
    }
}

std::span<const float> MemoryQueue::key(std::size_t i) const {
    if (i >= size_) throw Error("MemoryQueue: index out of range");
    const std::size_t oldest = size_ < capacity_ ? 0 : cursor_;
    return {data_.data() + ((oldest + i) % capacity_) * dim_, dim_};
}

long MemoryQueue::tag(std::size_t i) const {
    if (i >= size_) throw Error("MemoryQueue: index out of range");
    const std::size_t oldest = size_ < capacity_ ? 0 : cursor_;
    return tags_[(oldest + i) % capacity_];
}

std::vector<float> MemoryQueue::ordered() const {
    std::vector<float> out;
    out.reserve(size_ * dim_);
    for (std::size_t i = 0; i < size_; ++i) {
        const auto k = key(i);
        out.insert(out.end(), k.begin(), k.end());
    }
    return out;
}

double info_nce_loss(std::span<const float> query, std::span<const float> positive, std::span<const float> negatives,
                     double temperature) {
    if (!(temperature > 0.0)) throw Error("info_nce_loss: temperature must be > 0");
    const std::size_t dim = query.size();
    if (dim == 0 || positive.size() != dim || negatives.size() % dim != 0)
        throw Error("info_nce_loss: embedding dimension mismatch");

    auto dot = [&](std::span<const float> k) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) s += static_cast<double>(query[i]) * k[i];
        return s / temperature;
    };
    const std::size_t n_neg = negatives.size() / dim;
    std::vector<double> logits;
    logits.reserve(n_neg + 1);
    logits.push_back(dot(positive));
    for (std::size_t j = 0; j < n_neg; ++j) logits.push_back(dot(negatives.subspan(j * dim, dim)));

    const double mx = *std::max_element(logits.begin(), logits.end());
    double acc = 0.0;
    for (double l : logits) acc += std::exp(l - mx);
    return mx + std::log(acc) - logits.front();
}

double cosine_schedule(long step, long total_steps, double start, double end) {
    if (total_steps < 1) throw Error("cosine_schedule: total_steps must be >= 1");
    if (step < 0 || step > total_steps) throw Error("cosine_schedule: step out of range");
    if (step == 0) return start;
    if (step == total_steps) return end;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    return end + 0.5 * (start - end) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace sift
