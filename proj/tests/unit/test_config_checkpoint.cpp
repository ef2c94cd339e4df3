#include <filesystem>
#include <fstream>

#include "cgsam/checkpoint.hpp"
#include "cgsam/run_config.hpp"
#include "doctest.h"

using namespace cgsam;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("cgsam_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string config_error(const nlohmann::json& j)
{
    try {
        run_config_from_json(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("run config round trips through JSON and files")
{
    RunConfig c;
    c.model.semantic_adapter_blocks = 1;
    c.model.modalities.similarity = false;
    c.model.prompt_template = "an image of {}";
    c.train.mode = PromptMode::manual;
    c.train.epochs = 3;
    c.train.optimizer.lr = 3e-3;
    c.train.loss.iou = false;
    c.train.freeze.vision_attention = false;
    c.train.tau = 0.35;
    c.generator.camouflage = true;
    c.dataset = "data/x";
    c.val_split = "data/x/val.json";
    c.output_dir = "runs/r1";

    CHECK(run_config_from_json(to_json(c)) == c);

    const auto dir = scratch("config");
    save_run_config(dir / "c.json", c);
    CHECK(load_run_config(dir / "c.json") == c);
    fs::remove_all(dir);

    CHECK(run_config_from_json(nlohmann::json::object()) == RunConfig{});
    const auto vit = run_config_from_json({{"model", {{"preset", "vit_b"}}}});
    CHECK(vit.model == ModelConfig::vit_b());
}

TEST_CASE("config errors name the field")
{
    CHECK(config_error({{"train", {{"epochs", 0}}}}).find("train.epochs") != std::string::npos);
    CHECK(config_error({{"train", {{"epochs", "ten"}}}}).find("train.epochs") != std::string::npos);
    CHECK(config_error({{"train", {{"epoch", 3}}}}).find("train.epoch") != std::string::npos);
    CHECK(config_error({{"train", {{"mode", "auto"}}}}).find("train.mode") != std::string::npos);
    CHECK(config_error({{"train", {{"loss", {{"bce", false}, {"dice", false}, {"iou", false}}}}}}).find("train.loss") !=
          std::string::npos);
    CHECK(config_error({{"model", {{"image_encoder", {{"patch_size", 7}}}}}}).find("model.image_encoder") !=
          std::string::npos);
    CHECK(config_error({{"model", {{"semantic_adapter_blocks", 9}}}}).find("semantic_adapter_blocks") !=
          std::string::npos);
    CHECK(config_error({{"model", {{"preset", "huge"}}}}).find("model.preset") != std::string::npos);
    CHECK(config_error({{"bogus", 1}}).find("bogus") != std::string::npos);

    const auto dir = scratch("config_bad");
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir / "missing.json"), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip restores every weight")
{
    ModelConfig c = ModelConfig::toy();
    c.init_seed = 21;
    ClipGuidedSam m(c);
    m.params()[3].value.data[0] = 1.2345678901234567;
    const auto dir = scratch("ckpt");
    save_checkpoint(dir / "m.ckpt", m, {{"note", "hello"}});

    const auto loaded = load_checkpoint(dir / "m.ckpt");
    CHECK(loaded.model->config() == c);
    CHECK(loaded.extra["note"] == "hello");
    REQUIRE(loaded.model->params().size() == m.params().size());
    for (int i = 0; i < m.params().size(); ++i) {
        CHECK(loaded.model->params()[i].name == m.params()[i].name);
        CHECK(loaded.model->params()[i].value == m.params()[i].value);
    }

    ClipGuidedSam other(ModelConfig::toy());
    load_weights(dir / "m.ckpt", other);
    CHECK(other.params()[3].value == m.params()[3].value);

    ModelConfig different = ModelConfig::toy();
    different.decoder_depth = 1;
    ClipGuidedSam mismatch(different);
    CHECK_THROWS_AS(load_weights(dir / "m.ckpt", mismatch), LoadError);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint version and corruption are load errors")
{
    ClipGuidedSam m(ModelConfig::toy());
    const auto dir = scratch("ckpt_bad");
    save_checkpoint(dir / "m.ckpt", m);

    {
        std::fstream f(dir / "m.ckpt", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(8);
        const std::uint32_t v = kCheckpointVersion + 1;
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt"), VersionMismatch);

    std::ofstream(dir / "junk.ckpt") << "definitely not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), LoadError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), LoadError);

    save_checkpoint(dir / "t.ckpt", m);
    fs::resize_file(dir / "t.ckpt", fs::file_size(dir / "t.ckpt") - 100);
    CHECK_THROWS_AS(load_checkpoint(dir / "t.ckpt"), LoadError);
    fs::remove_all(dir);
}
