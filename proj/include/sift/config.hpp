#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sift/contrastive.hpp"
#include "sift/dataset.hpp"
#include "sift/encoder_spec.hpp"
#include "sift/finetune.hpp"
#include "sift/pair_sampler.hpp"
#include "sift/synthetic.hpp"

namespace sift {

struct PreprocessConfig {
    int short_side = 1024;
    int pad = 8;
};

struct EvaluateConfig {
    int n_patches = 20;
    int label_window = 9;
    std::vector<int> sweep = {1, 2, 4, 8, 16, 20};
};

/// Merged configuration tree. Every key of a user file must exist in the default
/// tree with the same JSON type; unknown keys are rejected. The hash is taken over
/// the canonical (key-sorted) dump, so it ignores key order in the source file.
class RunConfig {
public:
    RunConfig();  // defaults: full-scale hyperparameters

    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_json(const nlohmann::json& overrides);

    /// Overrides one dotted key (e.g. "finetune.mode"), type-checked against the defaults.
    void set(const std::string& dotted_key, const nlohmann::json& value);

    [[nodiscard]] const nlohmann::json& tree() const noexcept { return tree_; }
    [[nodiscard]] std::string hash() const;
    [[nodiscard]] std::uint64_t seed() const;

    [[nodiscard]] SynthConfig synthetic() const;
    [[nodiscard]] PreprocessConfig preprocess() const;
    [[nodiscard]] SplitSpec split() const;
    [[nodiscard]] PairPolicy pair_policy() const;
    [[nodiscard]] AugmentParams augment() const;
    [[nodiscard]] EncoderSpec encoder() const;
    [[nodiscard]] ContrastiveConfig pretrain() const;
    [[nodiscard]] FinetuneConfig finetune() const;
    [[nodiscard]] InitKind finetune_init() const;
    [[nodiscard]] EvaluateConfig evaluate() const;

    /// Validates every section's typed view.
    void validate() const;

    static const nlohmann::json& defaults();

private:
    void merge(const nlohmann::json& overrides);

    nlohmann::json tree_;
};

}  // namespace sift
