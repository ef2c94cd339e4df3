#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cgsam/backbone.hpp"
#include "cgsam/image.hpp"

namespace cgsam {

/// Per-patch cosine scores s (N x 1).
struct SimilarityScores {
    Matrix values;
};

struct SimilarityMap {
    int height = 0;
    int width = 0;
    std::vector<real> values;
    bool normalized = false;
    real at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
};

struct BinaryPromptMask {
    BinaryMask mask;
    real threshold_used = 0.0;
};

struct Point {
    int row = 0;
    int col = 0;
    int label = 1;  // positive
    friend bool operator==(const Point&, const Point&) = default;
};

enum class PointSource { similarity_mask, similarity_fallback, ground_truth, user };

std::string to_string(PointSource source);

struct PointPrompts {
    std::vector<Point> points;
    PointSource source = PointSource::similarity_mask;
    bool fallback = false;
};

struct DensePrompt {
    BinaryMask values;
};

inline constexpr real kCosineEps = 1e-8;
inline constexpr real kDefaultTau = 0.5;
inline constexpr int kDefaultPoints = 5;

SimilarityScores cosine_similarity_map(const PatchEmbeddings& v, const TextEmbedding& t, real eps = kCosineEps);
/// Row-major reshape to grid, bilinear upsample to out, then min-max normalize
/// (a constant map becomes all zeros).
SimilarityMap similarity_to_map(const SimilarityScores& s, GridSize grid, GridSize out);
/// 1 where S >= tau.
BinaryPromptMask threshold_map(const SimilarityMap& map, real tau);
/// K points uniformly without replacement from the foreground. With fewer
/// than K foreground pixels every one is used once and the rest are drawn with
/// replacement. An empty mask falls back to the top-K pixels of `fallback`
/// (ties in row-major order) and sets the flag.
PointPrompts sample_points(const BinaryPromptMask& b, int k, std::uint64_t seed, const SimilarityMap& fallback);
/// Same rule on a ground-truth mask; an empty mask is an input error.
PointPrompts sample_points_from_gt(const BinaryMask& gt, int k, std::uint64_t seed);
/// Nearest-neighbour resize (source index floor(dst * in / out)).
DensePrompt make_dense_prompt(const BinaryPromptMask& b, GridSize resolution);

/// Debug export: similarity.png, mask.png and points.json under dir.
void export_prompt_debug(const std::filesystem::path& dir, const SimilarityMap& map, const BinaryPromptMask& b,
                         const PointPrompts& points);

}  // namespace cgsam
