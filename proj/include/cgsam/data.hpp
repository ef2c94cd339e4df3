#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cgsam/image.hpp"

namespace cgsam {

/// Shape classes the generator can draw.
const std::vector<std::string>& synthetic_classes();

struct GeneratorParams {
    int n = 4;
    std::vector<std::string> classes = {"circle", "square", "triangle", "cross"};
    int size = 96;
    bool camouflage = false;
    std::uint64_t seed = 0;
    friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

struct SampleRecord {
    std::string id;
    std::string image;                          // relative to the dataset root
    std::vector<std::string> classes;           // classes present, in draw order
    std::map<std::string, std::string> masks;   // class -> relative mask path
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<std::string> classes;
    GeneratorParams generator;
    std::vector<SampleRecord> samples;

    const SampleRecord& sample(const std::string& id) const;
};

struct SplitManifest {
    std::string parent;  // manifest path the split was drawn from
    real fraction = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::string> ids;  // in manifest order
};

struct LoadedSample {
    std::string id;
    Image image;
    std::vector<std::string> classes;
    std::map<std::string, BinaryMask> masks;
};

/// One synthetic image with its per-class masks, fully determined by
/// (params.seed, index). Later shapes occlude earlier ones.
LoadedSample render_synthetic_sample(const GeneratorParams& params, int index);

/// Writes images/, masks/<class>/ and manifest.json under root.
DatasetManifest generate_synthetic_dataset(const GeneratorParams& params, const std::filesystem::path& root);

void save_manifest(const DatasetManifest& manifest);
/// Accepts the dataset directory or the manifest file itself.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// max(1, round-half-up(fraction * n)) ids taken from a seeded permutation,
/// so smaller fractions are subsets of larger ones at the same seed.
std::size_t split_size(real fraction, std::size_t n);
SplitManifest make_split(const DatasetManifest& manifest, real fraction, std::uint64_t seed);
/// The samples of manifest not in split, in manifest order.
SplitManifest complement_split(const DatasetManifest& manifest, const SplitManifest& split);
void save_split(const std::filesystem::path& path, const SplitManifest& split);
SplitManifest load_split(const std::filesystem::path& path);

LoadedSample load_sample(const DatasetManifest& manifest, const std::string& id);
std::vector<LoadedSample> load_samples(const DatasetManifest& manifest, const std::vector<std::string>& ids);

/// Mean absolute RGB difference across mask boundaries (4-neighbour pairs with
/// one pixel inside and one outside), averaged over the sample's masks.
real boundary_contrast(const LoadedSample& sample);

}  // namespace cgsam
