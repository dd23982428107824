#include "sift/nn/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sift/error.hpp"
#include "sift/log.hpp"
#include "sift/parallel.hpp"
#include "sift/rng.hpp"
#include "sift/volume_cache.hpp"

namespace sift::nn {

torch::Tensor info_nce_batch(const torch::Tensor& query, const torch::Tensor& key, const torch::Tensor& queue,
                             double temperature, const std::optional<torch::Tensor>& negative_mask) {
    if (!(temperature > 0.0)) throw Error("info_nce: temperature must be > 0");
    if (query.sizes() != key.sizes()) throw Error("info_nce: query/key shape mismatch");
    auto positive = (query * key).sum(1, /*keepdim=*/true);
    torch::Tensor logits = positive;
    if (queue.defined() && queue.size(0) > 0) {
        if (queue.size(1) != query.size(1)) throw Error("info_nce: queue dimension mismatch");
        auto negatives = torch::matmul(query, queue.t());
        if (negative_mask) negatives = negatives.masked_fill(negative_mask->logical_not(), -INFINITY);
        logits = torch::cat({positive, negatives}, 1);
    }
    logits = logits / temperature;
    return (torch::logsumexp(logits, 1) - logits.select(1, 0)).mean();
}

namespace {

struct Pairs {
    std::vector<Image> queries;
    std::vector<Image> keys;
    std::vector<long> key_tags;
    std::vector<long> anchor_tags;
    std::vector<PairKind> kinds;
};

Pairs draw_pairs(const VolumeCache& cache, const PairSampler& sampler, const AugmentParams& augment,
                 std::span<const SliceRef> anchors, std::uint64_t seed, int epoch, long step, int workers) {
    Pairs p;
    const std::size_t n = anchors.size();
    p.queries.resize(n);
    p.keys.resize(n);
    p.key_tags.resize(n);
    p.anchor_tags.resize(n);
    p.kinds.resize(n);
    parallel_for(n, workers, [&](std::size_t i) {
        Rng rng = make_rng(seed, {0x9e7, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step), i});
        const auto pair = sampler.sample(anchors[i], rng);
        p.queries[i] = sift::augment(cache.slice(pair.anchor), augment, rng);
        p.keys[i] = sift::augment(cache.slice(pair.positive), augment, rng);
        p.key_tags[i] = static_cast<long>(pair.positive.volume);
        p.anchor_tags[i] = static_cast<long>(pair.anchor.volume);
        p.kinds[i] = pair.pair_kind;
    });
    return p;
}

// Queue entries from the anchor's own breast are not negatives.
torch::Tensor strict_mask(const StudyManifest& manifest, std::span<const long> anchor_tags,
                          std::span<const long> queue_tags) {
    auto mask = torch::ones({static_cast<long>(anchor_tags.size()), static_cast<long>(queue_tags.size())},
                            torch::kBool);
    auto acc = mask.accessor<bool, 2>();
    for (std::size_t i = 0; i < anchor_tags.size(); ++i)
        for (std::size_t j = 0; j < queue_tags.size(); ++j)
            acc[i][j] = is_negative({static_cast<std::size_t>(anchor_tags[i]), 0},
                                    {static_cast<std::size_t>(queue_tags[j]), 0}, manifest);
    return mask;
}

}  // namespace

PretrainResult pretrain(const StudyManifest& manifest, const PretrainOptions& options) {
    const auto& cfg = options.config;
    cfg.validate();
    options.policy.validate();
    options.augment.validate();
    options.spec.validate();
    if (manifest.entries.empty()) throw Error("pretrain: empty manifest");

    const auto slices = all_slices(manifest);
    const VolumeCache cache(manifest);
    cache.preload(options.workers);
    const PairSampler sampler(manifest, options.policy);

    torch::manual_seed(derive_seed(options.seed, {0x1417}));
    PretrainResult result;
    result.online = build_network(options.spec, HeadKind::projection);
    result.momentum = build_network(options.spec, HeadKind::projection);
    copy_weights(*result.momentum, *result.online);
    for (auto& p : result.momentum->parameters()) p.set_requires_grad(false);

    const int batch = std::min<int>(cfg.batch_size, static_cast<int>(slices.size()));
    const long steps_per_epoch = cfg.steps_per_epoch > 0
                                     ? cfg.steps_per_epoch
                                     : static_cast<long>((slices.size() + batch - 1) / batch);
    const long total_steps = steps_per_epoch * cfg.epochs;

    torch::optim::SGD optimizer(result.online->parameters(), torch::optim::SGDOptions(cfg.base_lr)
                                                                  .momentum(cfg.sgd_momentum)
                                                                  .weight_decay(cfg.weight_decay));
    MemoryQueue queue(cfg.queue_size, static_cast<std::size_t>(options.spec.embedding_dim));
    const long dim = options.spec.embedding_dim;

    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(slices.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng = make_rng(options.seed, {0x5f1, static_cast<std::uint64_t>(epoch)});
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(shuffle_rng, 0, static_cast<long>(i) - 1))]);

        PretrainEpoch record;
        record.epoch = epoch;
        double loss_sum = 0.0;
        for (long s = 0; s < steps_per_epoch; ++s, ++step) {
            const double lr = cosine_schedule(step, total_steps, cfg.base_lr, cfg.final_lr);
            const double m = cosine_schedule(step, total_steps, cfg.momentum_start, cfg.momentum_end);
            if (s == 0) {
                record.lr = lr;
                record.m = m;
            }
            for (auto& group : optimizer.param_groups())
                static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);

            std::vector<SliceRef> anchors(batch);
            for (int i = 0; i < batch; ++i) anchors[i] = slices[order[(s * batch + i) % order.size()]];
            auto pairs = draw_pairs(cache, sampler, options.augment, anchors, options.seed, epoch, s, options.workers);
            for (auto k : pairs.kinds) ++record.pair_counts[static_cast<std::size_t>(k)];

            auto q = result.online->forward(to_tensor(pairs.queries));
            torch::Tensor k;
            {
                torch::NoGradGuard no_grad;
                k = result.momentum->forward(to_tensor(pairs.keys));
            }
            torch::Tensor queue_keys;
            if (queue.size() > 0) {
                const auto stored = queue.storage();
                queue_keys = torch::from_blob(const_cast<float*>(stored.data()),
                                              {static_cast<long>(queue.size()), dim}, torch::kFloat32)
                                 .clone();
            }
            std::optional<torch::Tensor> mask;
            if (cfg.strict_queue_filter && queue.size() > 0)
                mask = strict_mask(manifest, pairs.anchor_tags, queue.storage_tags());

            auto loss = info_nce_batch(q, k, queue_keys, cfg.temperature, mask);
            const double loss_value = loss.item<double>();
            if (!std::isfinite(loss_value)) {
                std::ostringstream msg;
                msg << "pretrain: non-finite loss at epoch " << epoch << " step " << s << " (lr " << lr << ", m " << m
                    << ", queue " << queue.size() << ")";
                throw Error(msg.str());
            }
            optimizer.zero_grad();
            loss.backward();
            optimizer.step();
            ema_update(*result.momentum, *result.online, m);

            auto k_contig = k.contiguous();
            queue.enqueue({k_contig.data_ptr<float>(), static_cast<std::size_t>(k_contig.numel())}, pairs.key_tags);
            loss_sum += loss_value;
        }
        record.mean_loss = loss_sum / static_cast<double>(steps_per_epoch);
        std::ostringstream msg;
        msg << "pretrain epoch " << epoch + 1 << "/" << cfg.epochs << " loss " << record.mean_loss;
        log::info(msg.str());
        result.history.push_back(record);
        if (options.on_epoch) options.on_epoch(record);
    }
    return result;
}

}  // namespace sift::nn
