#include "sift/nn/evaluate.hpp"

#include <algorithm>

#include "sift/error.hpp"
#include "sift/finetune.hpp"
#include "sift/parallel.hpp"

namespace sift::nn {

std::vector<double> patch_probabilities(SiftNetImpl& net, std::span<const Image> patches, int batch_size) {
    torch::InferenceMode guard;
    std::vector<double> out;
    out.reserve(patches.size());
    for (std::size_t start = 0; start < patches.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto chunk = patches.subspan(start, std::min<std::size_t>(batch_size, patches.size() - start));
        auto logits = net.forward(to_tensor(chunk));
        if (logits.size(1) != 2) throw Error("patch_probabilities: network is not a 2-class classifier");
        auto p = torch::softmax(logits.to(torch::kFloat64), 1).select(1, 1).contiguous();
        const double* data = p.data_ptr<double>();
        out.insert(out.end(), data, data + p.numel());
    }
    return out;
}

double score_slice(SiftNetImpl& net, const Image& slice, int n_patches, int patch_size, Rng& rng) {
    if (n_patches < 1) throw Error("score_slice: N must be >= 1");
    std::vector<Image> patches;
    patches.reserve(static_cast<std::size_t>(n_patches));
    for (int i = 0; i < n_patches; ++i)
        patches.push_back(sample_patch(slice, {}, ClassLabel::normal, std::nullopt, patch_size, rng, false).pixels);
    const auto probs = patch_probabilities(net, patches);
    return mean_probability(probs);
}

std::map<int, ScoreTable> evaluate_sweep(SiftNetImpl& net, const VolumeCache& volumes, const EvaluateOptions& options,
                                         std::span<const int> counts) {
    if (counts.empty()) throw Error("evaluate: no patch counts");
    for (int n : counts)
        if (n < 1) throw Error("evaluate: N must be >= 1");
    const int n_max = *std::max_element(counts.begin(), counts.end());
    const auto& manifest = volumes.manifest();
    const std::size_t n_vol = manifest.entries.size();

    // probs[v][s * n_max + i]: i-th patch of slice s in volume v.
    std::vector<std::vector<double>> probs(n_vol);
    parallel_for(n_vol, options.workers, [&](std::size_t v) {
        const auto& record = manifest.entries[v];
        const Volume& volume = volumes.volume(v);
        const std::uint64_t vid = hash_string(record.volume_id());
        std::vector<Image> patches;
        patches.reserve(volume.size() * static_cast<std::size_t>(n_max));
        for (std::size_t s = 0; s < volume.size(); ++s) {
            Rng rng = make_rng(options.seed, {0xe7a1, vid, s});
            for (int i = 0; i < n_max; ++i)
                patches.push_back(sample_patch(volume[s], {v, static_cast<int>(s)}, ClassLabel::normal, std::nullopt,
                                               options.patch_size, rng, false)
                                      .pixels);
        }
        probs[v] = patch_probabilities(net, patches, options.batch_size);
    });

    std::map<int, ScoreTable> tables;
    for (int n : counts) {
        if (tables.contains(n)) continue;
        ScoreTable table;
        for (std::size_t v = 0; v < n_vol; ++v) {
            const auto& record = manifest.entries[v];
            const std::string id = record.volume_id();
            for (int s = 0; s < record.n_slices; ++s) {
                const std::span<const double> row(probs[v].data() + static_cast<std::size_t>(s) * n_max,
                                                  static_cast<std::size_t>(n));
                table.slices.push_back({id, s, mean_probability(row), slice_label(record, s, options.label_window)});
            }
        }
        rollup_volumes(table, manifest.entries);
        table.sort();
        tables.emplace(n, std::move(table));
    }
    return tables;
}

ScoreTable evaluate(SiftNetImpl& net, const VolumeCache& volumes, const EvaluateOptions& options) {
    const int counts[] = {options.n_patches};
    return std::move(evaluate_sweep(net, volumes, options, counts).at(options.n_patches));
}

}  // namespace sift::nn
