#include "sift/nn/finetune_train.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "sift/contrastive.hpp"
#include "sift/error.hpp"
#include "sift/log.hpp"
#include "sift/metrics.hpp"
#include "sift/nn/evaluate.hpp"
#include "sift/pair_sampler.hpp"
#include "sift/parallel.hpp"
#include "sift/rng.hpp"
#include "sift/volume_cache.hpp"

namespace sift::nn {

FinetuneOptimizer make_finetune_optimizer(SiftNetImpl& net, const FinetuneConfig& config) {
    auto partition = block_partition(net);
    const int n = static_cast<int>(partition.size());
    FinetuneOptimizer out;
    std::vector<torch::optim::OptimizerParamGroup> groups;
    auto add_group = [&](std::size_t b, double lr) {
        auto opts = std::make_unique<torch::optim::SGDOptions>(lr);
        opts->momentum(config.sgd_momentum).weight_decay(config.weight_decay);
        groups.emplace_back(partition.blocks[b], std::move(opts));
        out.base_lrs.push_back(lr);
        out.names.push_back(partition.names[b]);
    };
    if (config.mode == FinetuneMode::linear_probe) {
        for (int b = 0; b + 1 < n; ++b)
            for (auto& p : partition.blocks[static_cast<std::size_t>(b)]) p.set_requires_grad(false);
        add_group(static_cast<std::size_t>(n - 1), config.base_lr);
    } else {
        for (int b = 0; b < n; ++b) {
            const double lr = config.mode == FinetuneMode::full
                                  ? config.base_lr
                                  : discriminative_lr(config.base_lr, config.eta, n - 1 - b, n);
            add_group(static_cast<std::size_t>(b), lr);
        }
    }
    out.optimizer = std::make_unique<torch::optim::SGD>(std::move(groups),
                                                        torch::optim::SGDOptions(config.base_lr));
    return out;
}

SiftNet make_classifier(const FinetuneOptions& options, std::vector<std::string>* unmatched) {
    torch::manual_seed(derive_seed(options.seed, {0xf17e}));
    if (options.init == InitKind::random) {
        options.spec.validate();
        return build_network(options.spec, HeadKind::classifier);
    }
    if (!options.checkpoint) throw Error("finetune: pretrained init needs a checkpoint");
    const auto manifest = read_checkpoint_manifest(*options.checkpoint);
    SiftNet net = build_network(manifest.spec, HeadKind::classifier);
    auto missing = load_matching_weights(*net, *options.checkpoint);
    for (const auto& name : missing)
        if (name.rfind("head.", 0) != 0)
            throw Error("finetune: checkpoint is incompatible with the classifier (" + name + ")");
    if (unmatched) *unmatched = std::move(missing);
    return net;
}

namespace {

struct TrainSlices {
    std::vector<SliceRef> refs;
    std::vector<ClassLabel> labels;
};

TrainSlices training_slices(const StudyManifest& manifest, const FinetuneConfig& config) {
    TrainSlices t;
    for (std::size_t v = 0; v < manifest.entries.size(); ++v) {
        const auto& record = manifest.entries[v];
        for (int s = 0; s < record.n_slices; ++s) {
            const auto label = slice_label(record, s, config.label_window);
            if (label == ClassLabel::normal && config.exclude_abnormal_volumes_from_normals &&
                record.class_label == ClassLabel::abnormal)
                continue;
            t.refs.push_back({v, s});
            t.labels.push_back(label);
        }
    }
    return t;
}

double validation_auc(SiftNetImpl& net, const VolumeCache& val, const FinetuneOptions& options, int epoch) {
    EvaluateOptions eo;
    eo.n_patches = options.config.val_patches;
    eo.patch_size = options.config.patch_size;
    eo.label_window = options.config.label_window;
    eo.seed = derive_seed(options.seed, {0x7a1, static_cast<std::uint64_t>(epoch)});
    eo.workers = options.workers;
    const auto table = evaluate(net, val, eo);
    const auto labels = table.slice_labels();
    const bool both = std::count(labels.begin(), labels.end(), ClassLabel::abnormal) > 0 &&
                      std::count(labels.begin(), labels.end(), ClassLabel::normal) > 0;
    if (!both) return std::numeric_limits<double>::quiet_NaN();
    return auc(table.slice_scores(), labels);
}

}  // namespace

FinetuneResult finetune(const StudyManifest& train, const StudyManifest& val, const FinetuneOptions& options) {
    const auto& cfg = options.config;
    cfg.validate();
    FinetuneResult result;
    result.net = make_classifier(options, &result.unmatched);
    SiftNet best = build_network(result.net->spec(), HeadKind::classifier);
    copy_weights(*best, *result.net);

    const auto slices = training_slices(train, cfg);
    BalancedBatchSampler sampler(slices.labels, cfg.batch_size, cfg.target_batch_ratio);
    const VolumeCache train_cache(train);
    const VolumeCache val_cache(val);
    train_cache.preload(options.workers);
    val_cache.preload(options.workers);

    auto opt = make_finetune_optimizer(*result.net, cfg);
    const int epochs = options.init == InitKind::random ? cfg.random_init_epochs : cfg.epochs;
    const auto batches = static_cast<long>(sampler.batches_per_epoch(cfg.abnormal_draws_per_epoch, cfg.max_batches_per_epoch));
    const long total_steps = batches * epochs;

    Rng batch_rng = make_rng(options.seed, {0xba7c});
    result.best_val_auc = -std::numeric_limits<double>::infinity();
    long step = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        result.net->train();
        if (cfg.mode == FinetuneMode::linear_probe) result.net->encoder->eval();
        FinetuneEpoch record;
        record.epoch = epoch;
        record.lr_scale = cosine_schedule(step, total_steps, 1.0, 0.0);
        double loss_sum = 0.0;
        for (long b = 0; b < batches; ++b, ++step) {
            const double scale = cosine_schedule(step, total_steps, 1.0, 0.0);
            auto& groups = opt.optimizer->param_groups();
            for (std::size_t g = 0; g < groups.size(); ++g)
                static_cast<torch::optim::SGDOptions&>(groups[g].options()).lr(opt.base_lrs[g] * scale);

            const auto indices = sampler.next_batch(batch_rng);
            std::vector<Image> patches(indices.size());
            std::vector<long> targets(indices.size());
            parallel_for(indices.size(), options.workers, [&](std::size_t i) {
                const SliceRef ref = slices.refs[indices[i]];
                const auto label = slices.labels[indices[i]];
                const auto& record_v = train.entries[ref.volume];
                std::optional<BBox> bbox;
                if (record_v.annotation) bbox = record_v.annotation->bbox;
                Rng rng = make_rng(options.seed, {0x9a7c, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(b), i});
                patches[i] = sample_patch(train_cache.slice(ref), ref, label, bbox, cfg.patch_size, rng, true).pixels;
                if (bernoulli(rng, cfg.flip_prob)) patches[i] = flip_horizontal(patches[i]);
                targets[i] = label == ClassLabel::abnormal ? 1 : 0;
            });
            auto logits = result.net->forward(to_tensor(patches));
            auto loss = torch::nn::functional::cross_entropy(logits, torch::tensor(targets, torch::kLong));
            const double value = loss.item<double>();
            if (!std::isfinite(value)) throw Error("finetune: non-finite loss at epoch " + std::to_string(epoch));
            opt.optimizer->zero_grad();
            loss.backward();
            opt.optimizer->step();
            loss_sum += value;
        }
        record.train_loss = loss_sum / static_cast<double>(batches);
        result.net->eval();
        record.val_auc = validation_auc(*result.net, val_cache, options, epoch);
        // Without a two-class validation set the latest epoch is kept.
        const bool improved = std::isnan(record.val_auc) ? true : record.val_auc > result.best_val_auc;
        if (improved) {
            result.best_epoch = epoch;
            result.best_val_auc = record.val_auc;
            copy_weights(*best, *result.net);
        }
        std::ostringstream msg;
        msg << "finetune epoch " << epoch + 1 << "/" << epochs << " loss " << record.train_loss << " val_auc "
            << record.val_auc;
        log::info(msg.str());
        result.history.push_back(record);
        if (options.on_epoch) options.on_epoch(record);
    }
    best->eval();
    result.net = best;
    return result;
}

}  // namespace sift::nn
