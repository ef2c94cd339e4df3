#include <filesystem>
#include <fstream>
#include <sstream>

#include "cgsam/checkpoint.hpp"
#include "cgsam/run_config.hpp"
#include "cli.hpp"
#include "doctest.h"

using namespace cgsam;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result cli(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json first_epoch(const fs::path& log)
{
    std::ifstream in(log);
    std::string line;
    std::getline(in, line);
    return json::parse(line);
}

/// A tiny dataset and run config shared by the CLI cases.
struct Workspace {
    fs::path root = fs::temp_directory_path() / "cgsam_test_cli";
    fs::path config = root / "run.json";
    fs::path data = root / "data";

    Workspace()
    {
        fs::remove_all(root);
        fs::create_directories(root);
        RunConfig c;
        c.generator.n = 6;
        c.generator.seed = 4;
        c.dataset = data;
        c.train_split = data / "train.json";
        c.val_split = data / "val.json";
        c.output_dir = root / "run";
        c.train.epochs = 2;
        c.train.batch_size = 4;
        c.train.optimizer.lr = 3e-3;
        save_run_config(config, c);
    }
    ~Workspace() { fs::remove_all(root); }
};

}  // namespace

TEST_CASE("generate, train and eval from the command line")
{
    Workspace ws;
    const auto gen = cli({"generate-data", "--config", ws.config.string(), "--val-fraction", "0.34"});
    REQUIRE(gen.code == 0);
    CHECK(fs::exists(ws.data / "manifest.json"));
    CHECK(fs::exists(ws.data / "train.json"));
    CHECK(fs::exists(ws.data / "val.json"));

    const auto tr = cli({"train", "--config", ws.config.string(), "--seed", "7"});
    REQUIRE(tr.code == 0);
    CHECK(tr.out.find("epoch 2") != std::string::npos);
    const fs::path run = ws.root / "run";
    CHECK(fs::exists(run / "config.json"));
    CHECK(fs::exists(run / "best.ckpt"));
    CHECK(load_run_config(run / "config.json").train.seed == 7);
    const json e1 = first_epoch(run / "metrics.jsonl");
    for (const char* k : {"epoch", "loss", "bce", "dice", "iou", "lr", "val_miou", "steps"}) CHECK(e1.contains(k));

    // Same seed, same first epoch.
    const auto again = cli({"train", "--config", ws.config.string(), "--seed", "7", "--out", (ws.root / "run2").string()});
    REQUIRE(again.code == 0);
    CHECK(std::abs(first_epoch(ws.root / "run2" / "metrics.jsonl")["loss"].get<real>() - e1["loss"].get<real>()) <
          1e-12);

    const std::string ckpt = (run / "best.ckpt").string(), split = (ws.data / "val.json").string();
    const auto ev = cli({"eval", "--checkpoint", ckpt, "--split", split});
    REQUIRE(ev.code == 0);
    const fs::path metrics = run / "best.metrics.json";
    const json m = json::parse(slurp(metrics));
    for (const char* k : {"miou", "mae", "s_alpha", "e_phi", "f_beta_w"}) CHECK(m.contains(k));
    CHECK(m["mode"] == "semi_automatic");
    CHECK(ev.out.find("points from ground_truth") == std::string::npos);

    const std::string first = slurp(metrics);
    REQUIRE(cli({"eval", "--checkpoint", ckpt, "--split", split}).code == 0);
    CHECK(slurp(metrics) == first);

    const auto manual = cli({"eval", "--checkpoint", ckpt, "--split", split, "--mode", "manual", "--out",
                             (ws.root / "manual.json").string()});
    REQUIRE(manual.code == 0);
    CHECK(manual.out.find("points from ground_truth") != std::string::npos);
    CHECK(manual.out.find("points from similarity") == std::string::npos);
    CHECK(json::parse(slurp(ws.root / "manual.json"))["mode"] == "manual");

    CHECK(cli({"eval", "--checkpoint", ckpt, "--split", split, "--mode", "auto"}).code == 2);
}

TEST_CASE("configuration errors exit with 2 and name the field")
{
    Workspace ws;
    std::ofstream(ws.root / "bad.json") << R"({"train": {"epochs": -1}})";
    const auto r = cli({"train", "--config", (ws.root / "bad.json").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("train.epochs") != std::string::npos);

    CHECK(cli({"train"}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"report-params", "--preset", "giant"}).code == 2);
}

TEST_CASE("checkpoint version mismatch exits with 4")
{
    Workspace ws;
    const fs::path ckpt = ws.root / "m.ckpt";
    save_checkpoint(ckpt, ClipGuidedSam(ModelConfig::toy()));
    {
        std::fstream f(ckpt, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(8);
        const std::uint32_t v = kCheckpointVersion + 7;
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    const auto r = cli({"eval", "--checkpoint", ckpt.string(), "--dataset", (ws.root / "none").string()});
    CHECK(r.code == 4);
    CHECK(r.err.find("version") != std::string::npos);
}

TEST_CASE("report-params at base dimensions")
{
    Workspace ws;
    const fs::path out = ws.root / "params.json";
    const auto r = cli({"report-params", "--preset", "vit_b", "--out", out.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("image_encoder") != std::string::npos);
    const json j = json::parse(slurp(out));
    auto within = [](real value, real target) { return std::abs(value - target) <= 0.02 * target; };
    CHECK(within(j["base_segmentation"].get<real>() / 1e6, 93.7));
    for (const auto& row : j["components"])
        if (row["component"] == "vision_encoder") CHECK(within(row["total"].get<real>() / 1e6, 86.8));
    const real pct = j["adapter_overhead_percent"];
    const real vanilla = j["base_segmentation"].get<real>();
    CHECK(pct > 0.0);
    CHECK(j["adapters"].get<real>() < vanilla);
}
