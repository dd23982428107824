#include "sift/nn/models.hpp"

#include <fstream>

#include "sift/error.hpp"

namespace fs = std::filesystem;
namespace tnn = torch::nn;

namespace sift::nn {

namespace {

tnn::Conv2d conv3x3(int in, int out, int stride) {
    return tnn::Conv2d(tnn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

tnn::BatchNorm2d batch_norm(int channels) { return tnn::BatchNorm2d(channels); }

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int in_channels, int out_channels, int stride) {
    conv1_ = register_module("conv1", conv3x3(in_channels, out_channels, stride));
    norm1_ = register_module("norm1", batch_norm(out_channels));
    conv2_ = register_module("conv2", conv3x3(out_channels, out_channels, 1));
    norm2_ = register_module("norm2", batch_norm(out_channels));
    if (stride != 1 || in_channels != out_channels) {
        shortcut_ = register_module(
            "shortcut", tnn::Conv2d(tnn::Conv2dOptions(in_channels, out_channels, 1).stride(stride).bias(false)));
        shortcut_norm_ = register_module("shortcut_norm", batch_norm(out_channels));
    }
}

torch::Tensor ResidualBlockImpl::forward(torch::Tensor x) {
    auto out = torch::relu(norm1_(conv1_(x)));
    out = norm2_(conv2_(out));
    auto skip = shortcut_ ? shortcut_norm_(shortcut_(x)) : x;
    return torch::relu(out + skip);
}

EncoderImpl::EncoderImpl(EncoderSpec spec) : spec_(spec) {
    spec_.validate();
    const int w = spec_.width;
    auto finish = [&](tnn::Sequential& block, int channels) {
        block->push_back(tnn::AdaptiveAvgPool2d(tnn::AdaptiveAvgPool2dOptions(1)));
        block->push_back(tnn::Flatten());
        block->push_back(tnn::Linear(channels, spec_.embedding_dim));
    };

    if (spec_.kind == BackboneKind::small_cnn) {
        // 7 conv stages; stride 2 on every other stage, channels double every two stages.
        const int channels[8] = {1, w, w, 2 * w, 2 * w, 4 * w, 4 * w, 8 * w};
        for (int i = 0; i < 7; ++i) {
            tnn::Sequential block(conv3x3(channels[i], channels[i + 1], i % 2 == 1 ? 2 : 1),
                                  batch_norm(channels[i + 1]), tnn::ReLU());
            if (i == 6) finish(block, channels[7]);
            blocks_.push_back(block);
        }
    } else {
        blocks_.push_back(tnn::Sequential(conv3x3(1, w, 1), batch_norm(w), tnn::ReLU()));
        int in = w;
        for (int s = 0; s < 4; ++s) {
            const int out = w << s;
            tnn::Sequential block;
            for (int b = 0; b < spec_.blocks_per_stage; ++b) {
                block->push_back(ResidualBlock(in, out, b == 0 && s > 0 ? 2 : 1));
                in = out;
            }
            if (s == 3) finish(block, out);
            blocks_.push_back(block);
        }
    }
    for (std::size_t i = 0; i < blocks_.size(); ++i) register_module("block" + std::to_string(i), blocks_[i]);
}

torch::Tensor EncoderImpl::forward(torch::Tensor x) {
    for (auto& b : blocks_) x = b->forward(x);
    return x;
}

SiftNetImpl::SiftNetImpl(EncoderSpec spec, HeadKind head_kind, int n_classes) : head_kind_(head_kind) {
    encoder = register_module("encoder", Encoder(spec));
    const int e = spec.embedding_dim;
    if (head_kind == HeadKind::projection)
        head = register_module("head", tnn::Sequential(tnn::Linear(e, e), tnn::BatchNorm1d(e), tnn::ReLU(),
                                                       tnn::Linear(e, e)));
    else
        head = register_module("head", tnn::Sequential(tnn::Linear(e, n_classes)));
}

torch::Tensor SiftNetImpl::forward(torch::Tensor x) {
    auto out = head->forward(encoder->forward(x));
    if (head_kind_ == HeadKind::projection) out = tnn::functional::normalize(out, tnn::functional::NormalizeFuncOptions().dim(1));
    return out;
}

SiftNet build_network(const EncoderSpec& spec, HeadKind head) { return SiftNet(spec, head); }

BlockPartition block_partition(SiftNetImpl& net) {
    BlockPartition p;
    for (std::size_t i = 0; i < net.encoder->n_feature_blocks(); ++i) {
        p.blocks.push_back(net.encoder->block(i)->parameters());
        p.names.push_back("encoder.block" + std::to_string(i));
    }
    p.blocks.push_back(net.head->parameters());
    p.names.emplace_back("head");
    return p;
}

std::int64_t parameter_count(const std::vector<torch::Tensor>& params) {
    std::int64_t n = 0;
    for (const auto& t : params) n += t.numel();
    return n;
}

std::int64_t parameter_count(torch::nn::Module& module) { return parameter_count(module.parameters()); }

torch::Tensor to_tensor(std::span<const Image> images) {
    if (images.empty()) throw Error("to_tensor: no images");
    const int h = images.front().height, w = images.front().width;
    auto out = torch::empty({static_cast<long>(images.size()), 1, h, w}, torch::kFloat32);
    float* dst = out.data_ptr<float>();
    for (const auto& img : images) {
        if (img.height != h || img.width != w) throw Error("to_tensor: images differ in shape");
        for (float v : img.pixels) *dst++ = 2.0f * v - 1.0f;
    }
    return out;
}

void ema_update(torch::nn::Module& momentum, torch::nn::Module& online, double m) {
    if (!(m >= 0.0 && m <= 1.0)) throw Error("ema_update: momentum must lie in [0, 1]");
    torch::NoGradGuard guard;
    auto target = momentum.parameters();
    auto source = online.parameters();
    if (target.size() != source.size()) throw Error("ema_update: parameter structure mismatch");
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (!target[i].sizes().equals(source[i].sizes())) throw Error("ema_update: parameter shape mismatch");
        target[i].mul_(m).add_(source[i], 1.0 - m);
    }
    auto target_buffers = momentum.buffers();
    auto source_buffers = online.buffers();
    if (target_buffers.size() != source_buffers.size()) throw Error("ema_update: buffer structure mismatch");
    for (std::size_t i = 0; i < target_buffers.size(); ++i) {
        if (target_buffers[i].is_floating_point()) target_buffers[i].mul_(m).add_(source_buffers[i], 1.0 - m);
        else target_buffers[i].copy_(source_buffers[i]);
    }
}

void copy_weights(torch::nn::Module& target, torch::nn::Module& source) {
    torch::NoGradGuard guard;
    auto tp = target.named_parameters();
    auto sp = source.named_parameters();
    if (tp.size() != sp.size()) throw Error("copy_weights: structure mismatch");
    for (auto& item : sp) tp[item.key()].copy_(item.value());
    auto tb = target.named_buffers();
    for (auto& item : source.named_buffers()) tb[item.key()].copy_(item.value());
}

nlohmann::json to_json(const EncoderSpec& spec) {
    return {{"kind", std::string(to_string(spec.kind))},
            {"input_height", spec.input_height},
            {"input_width", spec.input_width},
            {"embedding_dim", spec.embedding_dim},
            {"n_blocks", spec.n_blocks},
            {"width", spec.width},
            {"blocks_per_stage", spec.blocks_per_stage}};
}

EncoderSpec encoder_spec_from_json(const nlohmann::json& j) {
    EncoderSpec s;
    s.kind = parse_backbone(j.at("kind").get<std::string>());
    s.input_height = j.at("input_height").get<int>();
    s.input_width = j.at("input_width").get<int>();
    s.embedding_dim = j.at("embedding_dim").get<int>();
    s.n_blocks = j.at("n_blocks").get<int>();
    s.width = j.at("width").get<int>();
    s.blocks_per_stage = j.at("blocks_per_stage").get<int>();
    s.validate();
    return s;
}

void save_checkpoint(SiftNetImpl& net, const CheckpointManifest& manifest, const fs::path& dir) {
    fs::create_directories(dir);
    torch::serialize::OutputArchive archive;
    for (const auto& p : net.named_parameters()) archive.write(p.key(), p.value());
    for (const auto& b : net.named_buffers()) archive.write(b.key(), b.value(), /*is_buffer=*/true);
    archive.save_to((dir / "weights.pt").string());

    nlohmann::json j = {{"spec", to_json(manifest.spec)},
                        {"head", manifest.head == HeadKind::projection ? "projection" : "classifier"},
                        {"phase", manifest.phase},
                        {"epoch", manifest.epoch},
                        {"config_hash", manifest.config_hash},
                        {"metrics", manifest.metrics}};
    std::ofstream out(dir / "checkpoint.json");
    out << j.dump(2) << '\n';
    if (!out) throw Error("cannot write checkpoint manifest in " + dir.string());
}

CheckpointManifest read_checkpoint_manifest(const fs::path& dir) {
    std::ifstream in(dir / "checkpoint.json");
    if (!in) throw Error("not a checkpoint directory: " + dir.string());
    nlohmann::json j;
    try {
        in >> j;
        CheckpointManifest m;
        m.spec = encoder_spec_from_json(j.at("spec"));
        m.head = j.at("head").get<std::string>() == "projection" ? HeadKind::projection : HeadKind::classifier;
        m.phase = j.at("phase").get<std::string>();
        m.epoch = j.at("epoch").get<int>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.metrics = j.value("metrics", nlohmann::json::object());
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
    }
}

std::vector<std::string> load_matching_weights(SiftNetImpl& target, const fs::path& dir) {
    const fs::path weights = dir / "weights.pt";
    if (!fs::exists(weights)) throw Error("missing weights in " + dir.string());
    torch::serialize::InputArchive archive;
    archive.load_from(weights.string());
    std::vector<std::string> unmatched;
    torch::NoGradGuard guard;
    for (auto& p : target.named_parameters()) {
        torch::Tensor t;
        if (archive.try_read(p.key(), t) && t.sizes().equals(p.value().sizes())) p.value().copy_(t);
        else unmatched.push_back(p.key());
    }
    for (auto& b : target.named_buffers()) {
        torch::Tensor t;
        if (archive.try_read(b.key(), t, /*is_buffer=*/true) && t.sizes().equals(b.value().sizes())) b.value().copy_(t);
        else unmatched.push_back(b.key());
    }
    return unmatched;
}

SiftNet load_network(const fs::path& dir) {
    const auto manifest = read_checkpoint_manifest(dir);
    SiftNet net(manifest.spec, manifest.head);
    const auto unmatched = load_matching_weights(*net, dir);
    if (!unmatched.empty()) throw Error("checkpoint " + dir.string() + " does not match its own spec (" + unmatched.front() + ")");
    net->eval();
    return net;
}

}  // namespace sift::nn
