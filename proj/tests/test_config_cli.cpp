#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sift/cli/cli.hpp"
#include "sift/config.hpp"
#include "sift/error.hpp"
#include "test_util.hpp"

using namespace sift;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    Result r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

void write_json_file(const fs::path& p, const json& j) {
    std::ofstream out(p);
    out << j.dump(2);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json tiny_config() {
    return json{
        {"seed", 2},
        {"synthetic", {{"n_patients", 12}, {"abnormal_fraction", 0.25}, {"slices_per_volume", 6},
                       {"slice_height", 64}, {"slice_width", 64}, {"lesion_radius_min", 3.0},
                       {"lesion_radius_max", 5.0}, {"lesion_z_extent", 3}}},
        {"preprocess", {{"short_side", 64}, {"pad", 4}}},
        {"split", {{"train", 0.5}, {"val", 0.25}, {"test", 0.25}}},
        {"pair_policy", {{"k", 2}}},
        {"augment", {{"blur_prob", 0.0}}},
        {"encoder", {{"input_size", 32}, {"embedding_dim", 8}, {"width", 4}}},
        {"pretrain", {{"queue_size", 32}, {"epochs", 1}, {"batch_size", 8}, {"steps_per_epoch", 2}}},
        {"finetune", {{"patch_size", 32}, {"epochs", 1}, {"random_init_epochs", 1}, {"batch_size", 8},
                      {"label_window", 1}, {"max_batches_per_epoch", 2}}},
        {"evaluate", {{"n_patches", 2}, {"label_window", 1}, {"sweep", {1, 2}}}},
    };
}

}  // namespace

// =============================================================================
// Configuration
// =============================================================================

TEST(RunConfig, DefaultsValidate) {
    RunConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.finetune().eta, 2.8);
    EXPECT_EQ(c.pretrain().temperature, 0.2);
}

TEST(RunConfig, UnknownKeyIsRejectedByName) {
    try {
        RunConfig::from_json(json{{"pretrain", {{"temprature", 0.1}}}});
        FAIL() << "expected a config error";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("temprature"), std::string::npos);
    }
    EXPECT_THROW(RunConfig::from_json(json{{"bogus", 1}}), ConfigError);
}

TEST(RunConfig, TypesAreChecked) {
    EXPECT_THROW(RunConfig::from_json(json{{"pretrain", {{"epochs", 1.5}}}}), ConfigError);
    EXPECT_THROW(RunConfig::from_json(json{{"finetune", {{"mode", 3}}}}), ConfigError);
    EXPECT_THROW(RunConfig::from_json(json{{"evaluate", {{"sweep", {1, 2.5}}}}}), ConfigError);
    EXPECT_NO_THROW(RunConfig::from_json(json{{"pretrain", {{"base_lr", 1}}}}));
}

TEST(RunConfig, HashIgnoresKeyOrder) {
    auto a = RunConfig::from_json(json::parse(R"({"seed": 3, "finetune": {"eta": 3.0, "epochs": 5}})"));
    auto b = RunConfig::from_json(json::parse(R"({"finetune": {"epochs": 5, "eta": 3.0}, "seed": 3})"));
    EXPECT_EQ(a.hash(), b.hash());
    auto c = RunConfig::from_json(json::parse(R"({"seed": 4, "finetune": {"eta": 3.0, "epochs": 5}})"));
    EXPECT_NE(a.hash(), c.hash());
}

TEST(RunConfig, DottedSetOverridesOneLeaf) {
    RunConfig c;
    c.set("finetune.eta", 3.5);
    EXPECT_EQ(c.finetune().eta, 3.5);
    EXPECT_EQ(c.finetune().epochs, 50);
    EXPECT_THROW(c.set("finetune.eta", 1.0), ConfigError);
}

TEST(RunConfig, ShippedConfigsLoad) {
    for (const char* name : {"desk.json", "paper.json"}) {
        const auto path = fs::path(SIFT_SOURCE_DIR) / "configs" / name;
        EXPECT_NO_THROW(RunConfig::from_file(path).validate()) << name;
    }
}

// =============================================================================
// Command line
// =============================================================================

TEST(Cli, UnknownConfigKeyFailsWithName) {
    test::TempDir dir;
    write_json_file(dir / "bad.json", json{{"finetune", {{"etaa", 2.0}}}});
    auto r = run_cli({"generate", "--config", (dir / "bad.json").string(), "--out", (dir / "o").string()});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("etaa"), std::string::npos) << r.err;
}

TEST(Cli, MissingSubcommandFails) {
    EXPECT_NE(run_cli({}).code, 0);
    EXPECT_NE(run_cli({"frobnicate"}).code, 0);
}

TEST(Cli, BadSetOverrideFails) {
    test::TempDir dir;
    auto r = run_cli({"generate", "--set", "synthetic.n_patients", "--out", (dir / "o").string()});
    EXPECT_NE(r.code, 0);
}

TEST(Cli, SmokePipeline) {
    test::TempDir dir;
    const auto cfg = (dir / "tiny.json").string();
    write_json_file(cfg, tiny_config());
    auto p = [&](const char* name) { return (dir / name).string(); };

    ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out-dir", p("raw")}).code, 0);
    EXPECT_TRUE(fs::exists(dir / "raw" / "manifest.csv"));
    EXPECT_TRUE(fs::exists(dir / "raw" / "provenance.json"));
    ASSERT_EQ(run_cli({"preprocess", "--config", cfg, "--manifest", p("raw"), "--out", p("pre")}).code, 0);
    ASSERT_EQ(run_cli({"split", "--config", cfg, "--manifest", p("pre"), "--out", p("split")}).code, 0);
    for (const char* part : {"train.csv", "val.csv", "test.csv"}) EXPECT_TRUE(fs::exists(dir / "split" / part));

    const auto train = p("split/train.csv"), val = p("split/val.csv"), test = p("split/test.csv");
    auto pre = run_cli({"pretrain", "--config", cfg, "--manifest", train, "--out", p("ckpt")});
    ASSERT_EQ(pre.code, 0) << pre.err;
    EXPECT_TRUE(fs::exists(dir / "ckpt" / "weights.pt"));
    auto ft = run_cli({"finetune", "--config", cfg, "--ckpt", p("ckpt"), "--manifest", train, "--val", val, "--out",
                       p("ft")});
    ASSERT_EQ(ft.code, 0) << ft.err;
    ASSERT_EQ(run_cli({"evaluate", "--config", cfg, "--ckpt", p("ft"), "--manifest", test, "--out", p("ev")}).code, 0);
    ASSERT_EQ(run_cli({"evaluate", "--config", cfg, "--ckpt", p("ft"), "--manifest", val, "--out", p("evv")}).code, 0);
    auto rep = run_cli({"report", "--config", cfg, "--scores", p("ev"), "--val", p("evv"), "--out", p("rep")});
    ASSERT_EQ(rep.code, 0) << rep.err;

    const auto report = json::parse(slurp(dir / "rep" / "report.json"));
    EXPECT_EQ(report.at("threshold_source"), "validation");
    for (const char* level : {"slice", "volume"}) {
        const auto& r = report.at(level);
        for (const char* part : {"fraction", "percent"}) {
            EXPECT_FALSE(r.at(part).contains("accuracy")) << level;
            for (const char* key : {"auc", "npv", "normal_recall", "abnormal_recall", "spec_at_87", "spec_at_80"})
                EXPECT_TRUE(r.at(part).contains(key)) << key;
        }
    }
    EXPECT_FALSE(report.contains("accuracy"));

    ASSERT_EQ(run_cli({"sweep-patches", "--config", cfg, "--ckpt", p("ft"), "--manifest", test, "--n", "1,2", "--out",
                       p("sweep")})
                  .code,
              0);
    EXPECT_NE(slurp(dir / "sweep" / "sweep.csv").find("n_patches"), std::string::npos);
    ASSERT_EQ(run_cli({"plot-roc", "--in", p("rep/roc.csv"), "--out", p("roc.svg")}).code, 0);
    EXPECT_NE(slurp(dir / "roc.svg").find("<svg"), std::string::npos);

    // Random init needs no checkpoint.
    auto rnd = run_cli({"finetune", "--config", cfg, "--init", "random", "--manifest", train, "--val", val, "--out",
                        p("ft_rnd")});
    EXPECT_EQ(rnd.code, 0) << rnd.err;
    // Pretrained init without one fails cleanly.
    auto missing = run_cli({"finetune", "--config", cfg, "--manifest", train, "--val", val, "--out", p("ft_bad")});
    EXPECT_NE(missing.code, 0);
    EXPECT_NE(missing.err.find("--ckpt"), std::string::npos);
}
