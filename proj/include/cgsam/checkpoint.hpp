#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "cgsam/model.hpp"
#include "json.hpp"

namespace cgsam {

/// Checkpoint layout (all integers little-endian):
///
///   "CGSAMCK1"                  8 bytes magic
///   u32 version                 kCheckpointVersion
///   u64 manifest length, bytes  UTF-8 JSON {"model": ..., "extra": ...}
///   u64 tensor count
///   per tensor:
///     u32 name length, name bytes
///     u8  dtype (1 = float64)
///     u32 ndim (always 2), u64 dims[ndim]
///     row-major float64 data
inline constexpr std::uint32_t kCheckpointVersion = 1;

class LoadError : public Error {
public:
    using Error::Error;
};

class VersionMismatch : public LoadError {
public:
    using LoadError::LoadError;
};

void save_checkpoint(const std::filesystem::path& path, const ClipGuidedSam& model,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
    std::unique_ptr<ClipGuidedSam> model;
    nlohmann::json extra;
};

/// Rebuilds the model from the stored config and fills every weight. A
/// missing, extra or misshapen tensor is a LoadError.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Copies the weights of `path` into an existing model whose config must
/// match (apart from the init seed).
void load_weights(const std::filesystem::path& path, ClipGuidedSam& model);

}  // namespace cgsam
