#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "sift/encoder_spec.hpp"
#include "sift/image.hpp"

namespace sift::nn {

enum class HeadKind { projection, classifier };

/// Two 3x3 conv + BatchNorm layers with an identity (or 1x1 projection) shortcut.
class ResidualBlockImpl : public torch::nn::Module {
public:
    ResidualBlockImpl(int in_channels, int out_channels, int stride);
    torch::Tensor forward(torch::Tensor x);

private:
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
    torch::nn::BatchNorm2d norm1_{nullptr}, norm2_{nullptr}, shortcut_norm_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Backbone: an ordered list of feature blocks ending in global average pooling and a
/// linear embedding layer (owned by the last block). Emits (B, embedding_dim).
class EncoderImpl : public torch::nn::Module {
public:
    explicit EncoderImpl(EncoderSpec spec);
    torch::Tensor forward(torch::Tensor x);

    [[nodiscard]] const EncoderSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] std::size_t n_feature_blocks() const noexcept { return blocks_.size(); }
    [[nodiscard]] torch::nn::Sequential block(std::size_t i) const { return blocks_.at(i); }

private:
    EncoderSpec spec_;
    std::vector<torch::nn::Sequential> blocks_;
};
TORCH_MODULE(Encoder);

/// Encoder plus either a 2-layer projection head (contrastive pre-training; output is
/// L2-normalized) or a linear classifier head (fine-tuning; output is logits).
/// Submodule names are shared so pre-trained encoder weights load by name.
class SiftNetImpl : public torch::nn::Module {
public:
    SiftNetImpl(EncoderSpec spec, HeadKind head, int n_classes = 2);
    torch::Tensor forward(torch::Tensor x);

    [[nodiscard]] HeadKind head_kind() const noexcept { return head_kind_; }
    [[nodiscard]] const EncoderSpec& spec() const noexcept { return encoder->spec(); }

    Encoder encoder{nullptr};
    torch::nn::Sequential head{nullptr};

private:
    HeadKind head_kind_;
};
TORCH_MODULE(SiftNet);

/// Parameter groups ordered input-side first; the last group is the head.
struct BlockPartition {
    std::vector<std::vector<torch::Tensor>> blocks;
    std::vector<std::string> names;

    [[nodiscard]] std::size_t size() const noexcept { return blocks.size(); }
};

SiftNet build_network(const EncoderSpec& spec, HeadKind head);
BlockPartition block_partition(SiftNetImpl& net);
std::int64_t parameter_count(const std::vector<torch::Tensor>& params);
std::int64_t parameter_count(torch::nn::Module& module);

/// Stacks equally sized images into a (B, 1, H, W) float tensor, mapped from [0,1] to [-1,1].
torch::Tensor to_tensor(std::span<const Image> images);

/// theta' <- m theta' + (1 - m) theta over matching parameters, outside autograd.
void ema_update(torch::nn::Module& momentum, torch::nn::Module& online, double m);
/// Copies every parameter and buffer of `source` into `target` (same structure).
void copy_weights(torch::nn::Module& target, torch::nn::Module& source);

struct CheckpointManifest {
    EncoderSpec spec;
    HeadKind head = HeadKind::projection;
    std::string phase;  // "pretrain" or "finetune"
    int epoch = 0;
    std::string config_hash;
    nlohmann::json metrics = nlohmann::json::object();
};

nlohmann::json to_json(const EncoderSpec& spec);
EncoderSpec encoder_spec_from_json(const nlohmann::json& j);

/// Writes `weights.pt` and `checkpoint.json` into `dir`.
void save_checkpoint(SiftNetImpl& net, const CheckpointManifest& manifest, const std::filesystem::path& dir);
CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir);

/// Loads every tensor of the checkpoint whose name and shape match a parameter or
/// buffer of `target`. Returns the names of `target` entries left unmatched.
std::vector<std::string> load_matching_weights(SiftNetImpl& target, const std::filesystem::path& dir);

/// Rebuilds the network described by a checkpoint and loads all of its weights.
SiftNet load_network(const std::filesystem::path& dir);

}  // namespace sift::nn
