#include "cgsam/semantic_prompting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cgsam/kernels.hpp"
#include "cgsam/rng.hpp"
#include "json.hpp"

namespace cgsam {

std::string to_string(PointSource source)
{
    switch (source) {
    case PointSource::similarity_mask: return "similarity_mask";
    case PointSource::similarity_fallback: return "similarity_fallback";
    case PointSource::ground_truth: return "ground_truth";
    case PointSource::user: return "user";
    }
    return "unknown";
}

SimilarityScores cosine_similarity_map(const PatchEmbeddings& v, const TextEmbedding& t, real eps)
{
    if (t.values.rows != 1 || t.values.cols != v.values.cols)
        throw InputError("cosine_similarity_map: text embedding has " + std::to_string(t.values.cols) +
                         " channels, patches have " + std::to_string(v.values.cols));
    if (v.values.rows != v.grid.count()) throw InputError("cosine_similarity_map: patch count does not match grid");
    real norm = 0.0;
    for (real x : t.values.data) norm += x * x;
    if (!(norm > 0.0)) throw InputError("cosine_similarity_map: zero text embedding");
    Graph g;
    return {ops::cosine_rows(g.constant(v.values), g.constant(t.values), eps).value()};
}

SimilarityMap similarity_to_map(const SimilarityScores& s, GridSize grid, GridSize out)
{
    if (s.values.cols != 1 || s.values.rows != grid.count())
        throw InputError("similarity_to_map: " + std::to_string(s.values.rows) + " scores for a " +
                         std::to_string(grid.height) + "x" + std::to_string(grid.width) + " grid");
    SimilarityMap m;
    m.height = out.height;
    m.width = out.width;
    m.values.resize(out.count());
    kernels::bilinear_resize(s.values.data, m.values, 1, grid.height, grid.width, out.height, out.width);
    const auto [lo, hi] = std::minmax_element(m.values.begin(), m.values.end());
    const real mn = *lo, mx = *hi;
    for (real& x : m.values) x = mx > mn ? (x - mn) / (mx - mn) : 0.0;
    m.normalized = true;
    return m;
}

BinaryPromptMask threshold_map(const SimilarityMap& map, real tau)
{
    if (!map.normalized) throw InputError("threshold_map: similarity map is not normalized");
    if (!(tau > 0.0 && tau < 1.0)) throw InputError("threshold_map: tau must be in (0, 1)");
    BinaryPromptMask b{BinaryMask(map.height, map.width), tau};
    for (std::size_t i = 0; i < map.values.size(); ++i) b.mask.values[i] = map.values[i] >= tau ? 1 : 0;
    return b;
}

namespace {

std::vector<Point> sample_foreground(const BinaryMask& m, int k, std::uint64_t seed)
{
    std::vector<int> fg;
    for (int i = 0; i < static_cast<int>(m.values.size()); ++i)
        if (m.values[i]) fg.push_back(i);
    auto gen = substream(seed, "points");
    std::vector<int> picked;
    const int n = static_cast<int>(fg.size());
    // Partial Fisher-Yates: the first min(k, n) draws are without replacement.
    for (int i = 0; i < std::min(k, n); ++i) {
        const int j = i + static_cast<int>(uniform_index(gen, static_cast<std::uint64_t>(n - i)));
        std::swap(fg[i], fg[j]);
        picked.push_back(fg[i]);
    }
    for (int i = n; i < k; ++i) picked.push_back(fg[uniform_index(gen, static_cast<std::uint64_t>(n))]);
    std::vector<Point> out;
    for (int idx : picked) out.push_back({idx / m.width, idx % m.width, 1});
    return out;
}

}  // namespace

PointPrompts sample_points(const BinaryPromptMask& b, int k, std::uint64_t seed, const SimilarityMap& fallback)
{
    if (k < 1) throw InputError("sample_points: K must be >= 1");
    PointPrompts p;
    if (b.mask.count() > 0) {
        p.points = sample_foreground(b.mask, k, seed);
        p.source = PointSource::similarity_mask;
        return p;
    }
    if (fallback.values.size() != b.mask.values.size() || fallback.width != b.mask.width)
        throw InputError("sample_points: fallback map does not match the mask");
    std::vector<int> order(fallback.values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int c) { return fallback.values[a] > fallback.values[c]; });
    for (int i = 0; i < k; ++i) {
        const int idx = order[i % order.size()];
        p.points.push_back({idx / fallback.width, idx % fallback.width, 1});
    }
    p.source = PointSource::similarity_fallback;
    p.fallback = true;
    return p;
}

PointPrompts sample_points_from_gt(const BinaryMask& gt, int k, std::uint64_t seed)
{
    if (k < 1) throw InputError("sample_points_from_gt: K must be >= 1");
    if (gt.count() == 0) throw InputError("sample_points_from_gt: ground-truth mask is empty");
    return {sample_foreground(gt, k, seed), PointSource::ground_truth, false};
}

DensePrompt make_dense_prompt(const BinaryPromptMask& b, GridSize resolution)
{
    const BinaryMask& m = b.mask;
    DensePrompt d{BinaryMask(resolution.height, resolution.width)};
    for (int r = 0; r < resolution.height; ++r) {
        const int sr = static_cast<int>(static_cast<long long>(r) * m.height / resolution.height);
        for (int c = 0; c < resolution.width; ++c) {
            const int sc = static_cast<int>(static_cast<long long>(c) * m.width / resolution.width);
            d.values.at(r, c) = m.at(sr, sc);
        }
    }
    return d;
}

void export_prompt_debug(const std::filesystem::path& dir, const SimilarityMap& map, const BinaryPromptMask& b,
                         const PointPrompts& points)
{
    std::filesystem::create_directories(dir);
    write_png_gray(dir / "similarity.png", map.height, map.width, map.values);
    write_png_mask(dir / "mask.png", b.mask);
    nlohmann::json j;
    j["threshold"] = b.threshold_used;
    j["source"] = to_string(points.source);
    j["fallback"] = points.fallback;
    j["points"] = nlohmann::json::array();
    for (const Point& p : points.points) j["points"].push_back({p.row, p.col, p.label});
    std::ofstream(dir / "points.json") << j.dump(2) << "\n";
}

}  // namespace cgsam
