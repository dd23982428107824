#include "sift/cli/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>
#include <torch/version.h>

#include "sift/aggregate.hpp"
#include "sift/cli/report.hpp"
#include "sift/config.hpp"
#include "sift/error.hpp"
#include "sift/hash.hpp"
#include "sift/log.hpp"
#include "sift/metrics.hpp"
#include "sift/nn/evaluate.hpp"
#include "sift/nn/finetune_train.hpp"
#include "sift/nn/pretrain.hpp"
#include "sift/parallel.hpp"
#include "sift/preprocess.hpp"
#include "sift/synthetic.hpp"
#include "sift/volume_cache.hpp"

#ifndef SIFT_VERSION
#define SIFT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace sift::cli {

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> overrides;  // dotted.key=json-value
};

/// Parses the right-hand side of --set as JSON, falling back to a bare string.
json parse_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return text;
    }
}

RunConfig load_config(const Common& c) {
    RunConfig config = c.config_path.empty() ? RunConfig::from_json(json::object()) : RunConfig::from_file(c.config_path);
    for (const auto& item : c.overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + item + "'");
        config.set(item.substr(0, eq), parse_value(item.substr(eq + 1)));
    }
    if (c.seed) config.set("seed", *c.seed);
    return config;
}

fs::path output_dir(const Common& c) {
    if (c.out.empty()) throw Error("--out is required");
    fs::create_directories(c.out);
    return c.out;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw Error("cannot write " + path.string());
}

void write_provenance(const fs::path& dir, const std::string& command, const RunConfig& config,
                      const std::vector<fs::path>& inputs, const std::vector<std::string>& argv) {
    json hashes = json::object();
    for (const auto& p : inputs)
        if (fs::is_regular_file(p)) hashes[p.string()] = sha256_file(p);
    write_json(dir / "provenance.json", {{"command", command},
                                         {"argv", argv},
                                         {"config_hash", config.hash()},
                                         {"seed", config.seed()},
                                         {"versions", {{"sift", SIFT_VERSION}, {"torch", TORCH_VERSION}}},
                                         {"workers", num_workers()},
                                         {"inputs", hashes},
                                         {"config", config.tree()}});
}

fs::path manifest_csv(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.csv" : p; }

StudyManifest load(const fs::path& p) { return load_manifest(manifest_csv(p)); }

// ---------------------------------------------------------------------------

void cmd_generate(const Common& c, const std::vector<std::string>& argv, std::ostream& out) {
    const auto config = load_config(c);
    const auto dir = output_dir(c);
    const auto manifest = generate_dataset(config.synthetic(), dir, num_workers());
    write_provenance(dir, "generate", config, {}, argv);
    const auto n = count(manifest);
    out << "generated " << n.patients << " patients, " << n.volumes << " volumes (" << n.abnormal_volumes
        << " abnormal) in " << dir.string() << '\n';
}

void cmd_preprocess(const Common& c, const std::string& input, const std::vector<std::string>& argv, std::ostream& out) {
    const auto config = load_config(c);
    const auto dir = output_dir(c);
    const auto source = load(input);
    const auto pp = config.preprocess();
    std::vector<PreprocessLogEntry> entries;
    const auto processed = preprocess_dataset(source, dir, pp.short_side, pp.pad, &entries, num_workers());
    write_manifest(processed, dir / "manifest.csv");
    std::ofstream log_csv(dir / "preprocess_log.csv");
    log_csv << "volume_id,crop_x0,crop_y0,crop_x1,crop_y1,resized_height,resized_width,degenerate\n";
    for (const auto& e : entries)
        log_csv << e.volume_id << ',' << e.rect.x0 << ',' << e.rect.y0 << ',' << e.rect.x1 << ',' << e.rect.y1 << ','
                << e.resized_height << ',' << e.resized_width << ',' << (e.degenerate ? 1 : 0) << '\n';
    write_provenance(dir, "preprocess", config, {manifest_csv(input)}, argv);
    out << "preprocessed " << processed.entries.size() << " volumes into " << dir.string() << '\n';
}

void cmd_split(const Common& c, const std::string& input, const std::vector<std::string>& argv, std::ostream& out) {
    const auto config = load_config(c);
    const auto dir = output_dir(c);
    const auto manifest = load(input);
    const auto result = split_subjectwise(manifest, config.split());
    const std::pair<const char*, const StudyManifest*> parts[] = {
        {"train", &result.train}, {"val", &result.val}, {"test", &result.test}};
    for (const auto& [name, part] : parts) {
        write_manifest(*part, dir / (std::string(name) + ".csv"));
        const auto n = count(*part);
        out << name << ": " << n.patients << " patients, " << n.volumes << " volumes, " << n.abnormal_volumes
            << " abnormal\n";
    }
    write_provenance(dir, "split", config, {manifest_csv(input)}, argv);
}

void write_history_csv(const fs::path& path, const std::string& header, const std::vector<std::string>& rows) {
    std::ofstream out(path);
    out << header << '\n';
    for (const auto& r : rows) out << r << '\n';
    if (!out) throw Error("cannot write " + path.string());
}

void cmd_pretrain(const Common& c, const std::string& input, const std::string& policy,
                  const std::vector<std::string>& argv, std::ostream& out) {
    Common cc = c;
    if (!policy.empty()) cc.overrides.push_back("pair_policy.kind=\"" + policy + "\"");
    const auto config = load_config(cc);
    const auto dir = output_dir(c);
    const auto manifest = load(input);

    nn::PretrainOptions options;
    options.config = config.pretrain();
    options.policy = config.pair_policy();
    options.augment = config.augment();
    options.spec = config.encoder();
    options.seed = config.seed();
    options.workers = num_workers();
    auto result = nn::pretrain(manifest, options);

    std::vector<std::string> rows, kinds;
    for (const auto& e : result.history) {
        std::ostringstream r, k;
        r.precision(9);
        r << e.epoch << ',' << e.mean_loss << ',' << e.lr << ',' << e.m;
        rows.push_back(r.str());
        k << e.epoch << ',' << e.pair_counts[0] << ',' << e.pair_counts[1] << ',' << e.pair_counts[2];
        kinds.push_back(k.str());
    }
    write_history_csv(dir / "history.csv", "epoch,mean_loss,lr,m", rows);
    write_history_csv(dir / "pair_counts.csv", "epoch,same_slice,inter_slice,inter_view", kinds);

    nn::CheckpointManifest ckpt;
    ckpt.spec = options.spec;
    ckpt.head = nn::HeadKind::projection;
    ckpt.phase = "pretrain";
    ckpt.epoch = options.config.epochs;
    ckpt.config_hash = config.hash();
    ckpt.metrics = {{"final_mean_loss", result.history.back().mean_loss}};
    nn::save_checkpoint(*result.online, ckpt, dir);
    write_provenance(dir, "pretrain", config, {manifest_csv(input)}, argv);
    out << "pretrained " << options.config.epochs << " epochs; final loss " << result.history.back().mean_loss << '\n';
}

void cmd_finetune(const Common& c, const std::string& ckpt_dir, const std::string& train_csv,
                  const std::string& val_csv, const std::string& mode, const std::string& init,
                  const std::vector<std::string>& argv, std::ostream& out) {
    Common cc = c;
    if (!mode.empty()) cc.overrides.push_back("finetune.mode=\"" + mode + "\"");
    if (!init.empty()) cc.overrides.push_back("finetune.init=\"" + init + "\"");
    const auto config = load_config(cc);
    const auto dir = output_dir(c);
    const auto train = load(train_csv);
    const auto val = load(val_csv);

    nn::FinetuneOptions options;
    options.config = config.finetune();
    options.init = config.finetune_init();
    if (options.init == InitKind::pretrained) {
        if (ckpt_dir.empty()) throw Error("finetune: --ckpt is required unless --init random");
        options.checkpoint = ckpt_dir;
    }
    options.spec = config.encoder();
    options.seed = config.seed();
    options.workers = num_workers();
    auto result = nn::finetune(train, val, options);

    std::vector<std::string> rows;
    for (const auto& e : result.history) {
        std::ostringstream r;
        r.precision(9);
        r << e.epoch << ',' << e.train_loss << ',' << e.val_auc;
        rows.push_back(r.str());
    }
    write_history_csv(dir / "history.csv", "epoch,train_loss,val_auc", rows);

    nn::CheckpointManifest ckpt;
    ckpt.spec = result.net->spec();
    ckpt.head = nn::HeadKind::classifier;
    ckpt.phase = "finetune";
    ckpt.epoch = result.best_epoch;
    ckpt.config_hash = config.hash();
    ckpt.metrics = {{"best_val_slice_auc", std::isfinite(result.best_val_auc) ? json(result.best_val_auc) : json(nullptr)},
                    {"mode", std::string(to_string(options.config.mode))},
                    {"init", options.init == InitKind::random ? "random" : "pretrained"}};
    nn::save_checkpoint(*result.net, ckpt, dir);
    std::vector<fs::path> inputs = {manifest_csv(train_csv), manifest_csv(val_csv)};
    if (options.checkpoint) inputs.push_back(*options.checkpoint / "weights.pt");
    write_provenance(dir, "finetune", config, inputs, argv);
    out << "fine-tuned (" << to_string(options.config.mode) << "); best epoch " << result.best_epoch
        << ", validation slice AUC " << result.best_val_auc << '\n';
}

nn::EvaluateOptions evaluate_options(const RunConfig& config) {
    nn::EvaluateOptions eo;
    const auto ev = config.evaluate();
    eo.n_patches = ev.n_patches;
    eo.label_window = ev.label_window;
    eo.patch_size = config.finetune().patch_size;
    eo.seed = config.seed();
    eo.workers = num_workers();
    return eo;
}

void cmd_evaluate(const Common& c, const std::string& ckpt_dir, const std::string& input, std::optional<int> n_patches,
                  const std::vector<std::string>& argv, std::ostream& out) {
    Common cc = c;
    if (n_patches) cc.overrides.push_back("evaluate.n_patches=" + std::to_string(*n_patches));
    const auto config = load_config(cc);
    const auto dir = output_dir(c);
    const auto manifest = load(input);
    auto net = nn::load_network(ckpt_dir);
    if (net->head_kind() != nn::HeadKind::classifier) throw Error("evaluate: checkpoint is not a fine-tuned classifier");
    const VolumeCache cache(manifest);
    const auto table = nn::evaluate(*net, cache, evaluate_options(config));
    write_slice_scores(table, dir / "scores.csv");
    write_volume_scores(table, dir / "volumes.csv");
    write_provenance(dir, "evaluate", config, {manifest_csv(input), fs::path(ckpt_dir) / "weights.pt"}, argv);
    out << "scored " << table.slices.size() << " slices of " << table.volumes.size() << " volumes\n";
}

std::vector<int> parse_counts(const std::string& text) {
    std::vector<int> counts;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            const int n = std::stoi(item, &used);
            if (used != item.size() || n < 1) throw std::invalid_argument(item);
            counts.push_back(n);
        } catch (const std::exception&) {
            throw ConfigError("--n expects a comma-separated list of positive integers");
        }
    }
    if (counts.empty()) throw ConfigError("--n expects at least one patch count");
    return counts;
}

void cmd_sweep(const Common& c, const std::string& ckpt_dir, const std::string& input, const std::string& counts_text,
               const std::vector<std::string>& argv, std::ostream& out) {
    const auto config = load_config(c);
    const auto dir = output_dir(c);
    const auto counts = counts_text.empty() ? config.evaluate().sweep : parse_counts(counts_text);
    const auto manifest = load(input);
    auto net = nn::load_network(ckpt_dir);
    if (net->head_kind() != nn::HeadKind::classifier) throw Error("sweep-patches: checkpoint is not a fine-tuned classifier");
    const VolumeCache cache(manifest);
    const auto tables = nn::evaluate_sweep(*net, cache, evaluate_options(config), counts);

    std::ofstream csv(dir / "sweep.csv");
    csv.precision(9);
    csv << "n_patches,slice_auc,volume_auc,volume_spec_at_87,volume_spec_at_80\n";
    for (const auto& [n, table] : tables) {
        const auto vs = table.volume_scores();
        const auto vl = table.volume_labels();
        const double slice_auc = auc(table.slice_scores(), table.slice_labels());
        const double volume_auc = auc(vs, vl);
        csv << n << ',' << slice_auc << ',' << volume_auc << ',' << specificity_at_sensitivity(vs, vl, 0.87) << ','
            << specificity_at_sensitivity(vs, vl, 0.80) << '\n';
        out << "N=" << n << " slice AUC " << slice_auc << " volume AUC " << volume_auc << '\n';
    }
    if (!csv) throw Error("cannot write sweep.csv");
    write_provenance(dir, "sweep-patches", config, {manifest_csv(input), fs::path(ckpt_dir) / "weights.pt"}, argv);
}

ScoreTable read_scores(const fs::path& dir) { return read_score_table(dir / "scores.csv", dir / "volumes.csv"); }

void cmd_report(const Common& c, const std::string& scores_dir, const std::string& val_dir,
                std::optional<double> fixed_threshold, const std::vector<std::string>& argv, std::ostream& out) {
    const auto config = load_config(c);
    const auto dir = output_dir(c);
    const auto test = read_scores(scores_dir);

    double slice_threshold = 0.0, volume_threshold = 0.0;
    std::string fitted_on;
    std::vector<fs::path> inputs = {fs::path(scores_dir) / "scores.csv", fs::path(scores_dir) / "volumes.csv"};
    if (fixed_threshold) {
        slice_threshold = volume_threshold = *fixed_threshold;
        fitted_on = "fixed";
    } else {
        if (val_dir.empty()) throw Error("report: --val (validation scores) or --threshold is required");
        const auto val = read_scores(val_dir);
        slice_threshold = select_threshold(val.slice_scores(), val.slice_labels());
        volume_threshold = select_threshold(val.volume_scores(), val.volume_labels());
        fitted_on = "validation";
        inputs.push_back(fs::path(val_dir) / "scores.csv");
        inputs.push_back(fs::path(val_dir) / "volumes.csv");
    }

    const auto slice_report = compute_report(test.slice_scores(), test.slice_labels(), slice_threshold);
    const auto volume_report = compute_report(test.volume_scores(), test.volume_labels(), volume_threshold);
    write_json(dir / "report.json", {{"threshold_source", fitted_on},
                                     {"n_slices", test.slices.size()},
                                     {"n_volumes", test.volumes.size()},
                                     {"slice", to_json(slice_report)},
                                     {"volume", to_json(volume_report)}});
    write_roc_csv(roc_curve(test.volume_scores(), test.volume_labels()), dir / "roc.csv");
    write_roc_csv(roc_curve(test.slice_scores(), test.slice_labels()), dir / "roc_slice.csv");
    write_provenance(dir, "report", config, inputs, argv);
    out << "volume AUC " << volume_report.auc * 100 << "%, slice AUC " << slice_report.auc * 100 << "%\n";
}

void cmd_plot_roc(const std::string& in_csv, const std::string& out_svg, const std::string& title, std::ostream& out) {
    const auto curve = read_roc_csv(in_csv);
    std::ofstream svg(out_svg);
    svg << render_roc_svg(curve, title);
    if (!svg) throw Error("cannot write " + out_svg);
    out << "wrote " << out_svg << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Self-supervised pre-training and multi-patch fine-tuning for imbalanced volumetric classification",
                 "sift"};
    app.require_subcommand(1);
    app.set_version_flag("--version", SIFT_VERSION);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Global seed (overrides the config)");
        sub->add_option("--out,--out-dir", common.out, "Output directory")->required();
        sub->add_option("--set", common.overrides, "Override a config key: section.key=value");
    };

    std::string manifest, val, ckpt, mode, init, policy, counts, in_path, out_path, title = "ROC";
    std::optional<int> n_patches;
    std::optional<double> threshold;

    auto* generate = app.add_subcommand("generate", "Generate a synthetic tomosynthesis-like dataset");
    add_common(generate);

    auto* preprocess = app.add_subcommand("preprocess", "Resize and Otsu-crop every volume");
    add_common(preprocess);
    preprocess->add_option("--manifest", manifest, "Input manifest CSV or dataset directory")->required();

    auto* split = app.add_subcommand("split", "Subject-wise train/val/test split");
    add_common(split);
    split->add_option("--manifest", manifest)->required();

    auto* pretrain = app.add_subcommand("pretrain", "Contrastive pre-training");
    add_common(pretrain);
    pretrain->add_option("--manifest", manifest)->required();
    pretrain->add_option("--policy", policy, "sift | same_image_only | same_patient_any | inter_slice_only");

    auto* finetune = app.add_subcommand("finetune", "Supervised multi-patch fine-tuning");
    add_common(finetune);
    finetune->add_option("--ckpt", ckpt, "Pre-trained checkpoint directory");
    finetune->add_option("--manifest", manifest, "Training manifest")->required();
    finetune->add_option("--val", val, "Validation manifest")->required();
    finetune->add_option("--mode", mode, "linear_probe | full | discriminative");
    finetune->add_option("--init", init, "pretrained | random");

    auto* evaluate = app.add_subcommand("evaluate", "Score every slice and volume");
    add_common(evaluate);
    evaluate->add_option("--ckpt", ckpt)->required();
    evaluate->add_option("--manifest", manifest)->required();
    evaluate->add_option("--n-patches", n_patches, "Patches per slice");

    auto* sweep = app.add_subcommand("sweep-patches", "Metrics as a function of the patch count");
    add_common(sweep);
    sweep->add_option("--ckpt", ckpt)->required();
    sweep->add_option("--manifest", manifest)->required();
    sweep->add_option("--n", counts, "Comma-separated patch counts");

    auto* report = app.add_subcommand("report", "Metrics with a validation-fitted threshold");
    add_common(report);
    report->add_option("--scores", in_path, "Directory with scores.csv and volumes.csv")->required();
    report->add_option("--val", val, "Validation evaluation directory used to fit the threshold");
    report->add_option("--threshold", threshold, "Fixed operating threshold");

    auto* plot = app.add_subcommand("plot-roc", "Render roc.csv as SVG");
    plot->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
    plot->add_option("--out", out_path)->required();
    plot->add_option("--title", title);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        torch::set_num_threads(num_workers());
        if (*generate) cmd_generate(common, args, out);
        else if (*preprocess) cmd_preprocess(common, manifest, args, out);
        else if (*split) cmd_split(common, manifest, args, out);
        else if (*pretrain) cmd_pretrain(common, manifest, policy, args, out);
        else if (*finetune) cmd_finetune(common, ckpt, manifest, val, mode, init, args, out);
        else if (*evaluate) cmd_evaluate(common, ckpt, manifest, n_patches, args, out);
        else if (*sweep) cmd_sweep(common, ckpt, manifest, counts, args, out);
        else if (*report) cmd_report(common, in_path, val, threshold, args, out);
        else if (*plot) cmd_plot_roc(in_path, out_path, title, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace sift::cli
