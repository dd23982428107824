#include "sift/config.hpp"

#include <fstream>

#include "sift/error.hpp"
#include "sift/hash.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sift {

const json& RunConfig::defaults() {
    static const json d = json::parse(R"({
        "seed": 0,
        "synthetic": {
            "n_patients": 20, "abnormal_fraction": 0.1, "slices_per_volume": 24,
            "slice_height": 128, "slice_width": 128, "lesion_intensity_boost": 0.35,
            "lesion_radius_min": 4.0, "lesion_radius_max": 7.0, "lesion_z_extent": 9
        },
        "preprocess": {"short_side": 1024, "pad": 8},
        "split": {"train": 0.7, "val": 0.1, "test": 0.2, "stratify": true},
        "pair_policy": {"kind": "sift", "view_prob": 0.5, "k": 9},
        "augment": {
            "crop_scale_min": 0.6, "crop_scale_max": 1.0, "jitter_strength": 0.2,
            "flip_prob": 0.5, "blur_prob": 0.5
        },
        "encoder": {
            "kind": "small_cnn", "input_size": 224, "embedding_dim": 128, "n_blocks": 0,
            "width": 16, "blocks_per_stage": 1
        },
        "pretrain": {
            "temperature": 0.2, "momentum_start": 0.99, "momentum_end": 1.0, "queue_size": 4096,
            "epochs": 4000, "batch_size": 128, "base_lr": 0.015, "final_lr": 0.0,
            "sgd_momentum": 0.9, "weight_decay": 0.0001, "steps_per_epoch": 0,
            "strict_queue_filter": false
        },
        "finetune": {
            "init": "pretrained", "patch_size": 448, "mode": "discriminative", "base_lr": 0.01,
            "eta": 2.8, "epochs": 50, "random_init_epochs": 100, "batch_size": 32,
            "target_batch_ratio": 0.5, "sgd_momentum": 0.9, "weight_decay": 0.0001,
            "label_window": 9, "abnormal_draws_per_epoch": 4, "max_batches_per_epoch": 0,
            "val_patches": 1, "flip_prob": 0.5, "exclude_abnormal_volumes_from_normals": false
        },
        "evaluate": {"n_patches": 20, "label_window": 9, "sweep": [1, 2, 4, 8, 16, 20]}
    })");
    return d;
}

namespace {

bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) {
        // Integers must stay integers; floats accept integer literals.
        return !(a.is_number_integer() && b.is_number_float());
    }
    return a.type() == b.type();
}

void check_against(const json& schema, const json& value, const std::string& path) {
    if (schema.is_object()) {
        if (!value.is_object()) throw ConfigError("config key '" + path + "' must be an object");
        for (auto it = value.begin(); it != value.end(); ++it) {
            const std::string key = path.empty() ? it.key() : path + "." + it.key();
            if (!schema.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
            check_against(schema.at(it.key()), it.value(), key);
        }
        return;
    }
    if (!same_kind(schema, value)) throw ConfigError("config key '" + path + "' has the wrong type");
    if (schema.is_array())
        for (const auto& v : value)
            if (!v.is_number_integer()) throw ConfigError("config key '" + path + "' must hold integers");
}

}  // namespace

RunConfig::RunConfig() : tree_(defaults()) {}

void RunConfig::merge(const json& overrides) {
    check_against(defaults(), overrides, "");
    tree_.merge_patch(overrides);
}

RunConfig RunConfig::from_json(const json& overrides) {
    RunConfig c;
    c.merge(overrides);
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

void RunConfig::set(const std::string& dotted_key, const json& value) {
    json patch = value;
    std::string key = dotted_key;
    for (auto pos = key.rfind('.'); ; pos = key.rfind('.')) {
        const std::string leaf = pos == std::string::npos ? key : key.substr(pos + 1);
        patch = json{{leaf, patch}};
        if (pos == std::string::npos) break;
        key.resize(pos);
    }
    merge(patch);
    validate();
}

std::string RunConfig::hash() const { return sha256_hex(tree_.dump()); }

std::uint64_t RunConfig::seed() const { return tree_.at("seed").get<std::uint64_t>(); }

SynthConfig RunConfig::synthetic() const {
    const auto& s = tree_.at("synthetic");
    SynthConfig c;
    c.n_patients = s.at("n_patients");
    c.abnormal_fraction = s.at("abnormal_fraction");
    c.slices_per_volume = s.at("slices_per_volume");
    c.slice_height = s.at("slice_height");
    c.slice_width = s.at("slice_width");
    c.lesion_intensity_boost = s.at("lesion_intensity_boost");
    c.lesion_radius_min = s.at("lesion_radius_min");
    c.lesion_radius_max = s.at("lesion_radius_max");
    c.lesion_z_extent = s.at("lesion_z_extent");
    c.seed = seed();
    return c;
}

PreprocessConfig RunConfig::preprocess() const {
    const auto& s = tree_.at("preprocess");
    return {s.at("short_side"), s.at("pad")};
}

SplitSpec RunConfig::split() const {
    const auto& s = tree_.at("split");
    SplitSpec c;
    c.train = s.at("train");
    c.val = s.at("val");
    c.test = s.at("test");
    c.stratify = s.at("stratify");
    c.seed = seed();
    return c;
}

PairPolicy RunConfig::pair_policy() const {
    const auto& s = tree_.at("pair_policy");
    PairPolicy p;
    p.kind = parse_pair_policy(s.at("kind").get<std::string>());
    p.view_prob = s.at("view_prob");
    p.k = s.at("k");
    return p;
}

AugmentParams RunConfig::augment() const {
    const auto& s = tree_.at("augment");
    AugmentParams a;
    a.crop_scale_min = s.at("crop_scale_min");
    a.crop_scale_max = s.at("crop_scale_max");
    a.jitter_strength = s.at("jitter_strength");
    a.flip_prob = s.at("flip_prob");
    a.blur_prob = s.at("blur_prob");
    a.output_size = tree_.at("encoder").at("input_size");
    return a;
}

EncoderSpec RunConfig::encoder() const {
    const auto& s = tree_.at("encoder");
    EncoderSpec e;
    e.kind = parse_backbone(s.at("kind").get<std::string>());
    e.input_height = e.input_width = s.at("input_size");
    e.embedding_dim = s.at("embedding_dim");
    const int n_blocks = s.at("n_blocks");
    e.n_blocks = n_blocks == 0 ? EncoderSpec::expected_blocks(e.kind) : n_blocks;
    e.width = s.at("width");
    e.blocks_per_stage = s.at("blocks_per_stage");
    return e;
}

ContrastiveConfig RunConfig::pretrain() const {
    const auto& s = tree_.at("pretrain");
    ContrastiveConfig c;
    c.temperature = s.at("temperature");
    c.momentum_start = s.at("momentum_start");
    c.momentum_end = s.at("momentum_end");
    c.queue_size = s.at("queue_size");
    c.epochs = s.at("epochs");
    c.batch_size = s.at("batch_size");
    c.base_lr = s.at("base_lr");
    c.final_lr = s.at("final_lr");
    c.sgd_momentum = s.at("sgd_momentum");
    c.weight_decay = s.at("weight_decay");
    c.steps_per_epoch = s.at("steps_per_epoch");
    c.strict_queue_filter = s.at("strict_queue_filter");
    return c;
}

FinetuneConfig RunConfig::finetune() const {
    const auto& s = tree_.at("finetune");
    FinetuneConfig c;
    c.patch_size = s.at("patch_size");
    c.mode = parse_finetune_mode(s.at("mode").get<std::string>());
    c.base_lr = s.at("base_lr");
    c.eta = s.at("eta");
    c.epochs = s.at("epochs");
    c.random_init_epochs = s.at("random_init_epochs");
    c.batch_size = s.at("batch_size");
    c.target_batch_ratio = s.at("target_batch_ratio");
    c.sgd_momentum = s.at("sgd_momentum");
    c.weight_decay = s.at("weight_decay");
    c.label_window = s.at("label_window");
    c.abnormal_draws_per_epoch = s.at("abnormal_draws_per_epoch");
    c.max_batches_per_epoch = s.at("max_batches_per_epoch");
    c.val_patches = s.at("val_patches");
    c.flip_prob = s.at("flip_prob");
    c.exclude_abnormal_volumes_from_normals = s.at("exclude_abnormal_volumes_from_normals");
    return c;
}

InitKind RunConfig::finetune_init() const {
    const auto name = tree_.at("finetune").at("init").get<std::string>();
    if (name == "pretrained") return InitKind::pretrained;
    if (name == "random") return InitKind::random;
    throw ConfigError("finetune.init must be 'pretrained' or 'random'");
}

EvaluateConfig RunConfig::evaluate() const {
    const auto& s = tree_.at("evaluate");
    EvaluateConfig c;
    c.n_patches = s.at("n_patches");
    c.label_window = s.at("label_window");
    c.sweep = s.at("sweep").get<std::vector<int>>();
    return c;
}

void RunConfig::validate() const {
    synthetic().validate();
    const auto pp = preprocess();
    if (pp.short_side < 1 || pp.pad < 0) throw ConfigError("preprocess: short_side >= 1 and pad >= 0 required");
    const auto sp = split();
    if (!(sp.train > 0 && sp.val > 0 && sp.test > 0) || std::abs(sp.train + sp.val + sp.test - 1.0) > 1e-6)
        throw ConfigError("split: ratios must be positive and sum to 1");
    pair_policy().validate();
    augment().validate();
    encoder().validate();
    pretrain().validate();
    finetune().validate();
    (void)finetune_init();
    const auto ev = evaluate();
    if (ev.n_patches < 1) throw ConfigError("evaluate: n_patches must be >= 1");
    if (ev.label_window < 0) throw ConfigError("evaluate: label_window must be >= 0");
    for (int n : ev.sweep)
        if (n < 1) throw ConfigError("evaluate: sweep entries must be >= 1");
}

}  // namespace sift
