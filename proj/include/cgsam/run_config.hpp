#pragma once

#include <filesystem>
#include <string>

#include "cgsam/data.hpp"
#include "cgsam/model_config.hpp"
#include "cgsam/training.hpp"
#include "json.hpp"

namespace cgsam {

/// Everything a CLI run needs. Missing JSON fields keep their defaults;
/// unknown fields, wrong types and invalid values are ConfigErrors naming
/// the field path.
struct RunConfig {
    ModelConfig model = ModelConfig::toy();
    TrainConfig train;
    GeneratorParams generator;              // used by generate-data
    std::filesystem::path dataset;          // manifest file or dataset directory
    std::filesystem::path train_split;      // empty: every sample of the dataset
    std::filesystem::path val_split;        // empty: no validation
    std::filesystem::path output_dir = "runs/default";

    void validate() const;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const GeneratorParams& params);
nlohmann::json to_json(const RunConfig& config);

/// `field` is the path prefix used in error messages. A "preset" key
/// ("toy" or "vit_b") selects the base the other keys override.
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& field = "model");
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& field = "train");
GeneratorParams generator_from_json(const nlohmann::json& j, const std::string& field = "generator");
RunConfig run_config_from_json(const nlohmann::json& j);

/// Parse errors are reported as ConfigError too; relative paths resolve
/// against the current directory.
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace cgsam
