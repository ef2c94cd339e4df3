#include "cgsam/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "cgsam/rng.hpp"
#include "json.hpp"

namespace cgsam {

using nlohmann::json;

const std::vector<std::string>& synthetic_classes()
{
    static const std::vector<std::string> names = {"circle", "square", "triangle", "cross", "ring", "bar"};
    return names;
}

const SampleRecord& DatasetManifest::sample(const std::string& id) const
{
    for (const auto& s : samples)
        if (s.id == id) return s;
    throw InputError("sample '" + id + "' is not in the manifest");
}

namespace {

constexpr int kFormatVersion = 1;
constexpr int kMinMaskPixels = 25;

struct Rgb {
    real r, g, b;
};

Rgb hsv(real h, real s, real v)
{
    h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
    const int i = static_cast<int>(h) % 6;
    const real f = h - std::floor(h);
    const real p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
    }
}

real uniform(std::mt19937_64& gen, real lo, real hi) { return lo + (hi - lo) * uniform01(gen); }

int class_index(const std::string& name)
{
    const auto& all = synthetic_classes();
    const auto it = std::find(all.begin(), all.end(), name);
    if (it == all.end()) throw InputError("unknown synthetic class '" + name + "'");
    return static_cast<int>(it - all.begin());
}

/// Membership test in the shape's own rotated frame (u, v), radius r.
bool inside(int shape, real u, real v, real r)
{
    const real d2 = u * u + v * v;
    switch (shape) {
    case 0: return d2 <= r * r;                                        // circle
    case 1: return std::abs(u) <= 0.8 * r && std::abs(v) <= 0.8 * r;   // square
    case 2: {                                                          // triangle
        for (int k = 0; k < 3; ++k) {
            const real a = std::numbers::pi / 2 + k * 2 * std::numbers::pi / 3;
            if (u * std::cos(a) + v * std::sin(a) > 0.5 * r) return false;
        }
        return true;
    }
    case 3:  // cross
        return (std::abs(u) <= 0.3 * r && std::abs(v) <= r) || (std::abs(v) <= 0.3 * r && std::abs(u) <= r);
    case 4: return d2 <= r * r && d2 >= 0.3025 * r * r;  // ring, inner radius 0.55 r
    default: return std::abs(u) <= 1.1 * r && std::abs(v) <= 0.28 * r;  // bar
    }
}

std::string sample_id(int i)
{
    std::ostringstream os;
    os << std::setw(6) << std::setfill('0') << i;
    return os.str();
}

LoadedSample render_attempt(const GeneratorParams& p, int index, int attempt)
{
    auto gen = substream(p.seed, "sample", static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(attempt));
    const int n = p.size;
    const real scale = n / 96.0;

    // Textured background: a few low-frequency waves plus pixel noise on the value channel.
    const real bg_h = uniform(gen, 0, 360), bg_s = uniform(gen, 0.15, 0.35), bg_v = uniform(gen, 0.35, 0.65);
    struct Wave {
        real fx, fy, phase, amp;
    };
    std::vector<Wave> waves(3);
    for (auto& w : waves) {
        const real f = uniform(gen, 0.05, 0.25) / scale, a = uniform(gen, 0, 2 * std::numbers::pi);
        w = {f * std::cos(a), f * std::sin(a), uniform(gen, 0, 2 * std::numbers::pi), uniform(gen, 0.04, 0.1)};
    }
    std::vector<real> texture(static_cast<std::size_t>(n) * n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            real t = uniform(gen, -0.03, 0.03);
            for (const auto& w : waves) t += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
            texture[static_cast<std::size_t>(y) * n + x] = t;
        }
    const Rgb bg = hsv(bg_h, bg_s, bg_v);

    LoadedSample s;
    s.image = Image(n, n);
    for (int i = 0; i < n * n; ++i) {
        s.image.pixels(i, 0) = bg.r + texture[i];
        s.image.pixels(i, 1) = bg.g + texture[i];
        s.image.pixels(i, 2) = bg.b + texture[i];
    }

    std::vector<std::string> pool = p.classes;
    const int count = 1 + static_cast<int>(uniform_index(gen, std::min<std::size_t>(3, pool.size())));
    for (int i = 0; i < count; ++i) {
        const auto j = i + static_cast<int>(uniform_index(gen, pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);

    std::vector<int> owner(static_cast<std::size_t>(n) * n, -1);
    for (int k = 0; k < count; ++k) {
        const int shape = class_index(pool[k]);
        const real hue = shape * 60.0 + uniform(gen, -12, 12);
        Rgb fg = hsv(hue, uniform(gen, 0.55, 0.9), uniform(gen, 0.55, 0.9));
        if (p.camouflage) {
            const real lambda = 0.3;
            fg = {bg.r + lambda * (fg.r - bg.r), bg.g + lambda * (fg.g - bg.g), bg.b + lambda * (fg.b - bg.b)};
        }
        const real r = uniform(gen, 10, 20) * scale;
        const real cx = uniform(gen, r + 2, n - r - 2), cy = uniform(gen, r + 2, n - r - 2);
        const real angle = uniform(gen, 0, std::numbers::pi);
        const real ca = std::cos(angle), sa = std::sin(angle);
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const real dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                if (!inside(shape, ca * dx + sa * dy, -sa * dx + ca * dy, r)) continue;
                const int i = y * n + x;
                owner[i] = k;
                const real tex = p.camouflage ? texture[i] : 0.3 * texture[i];
                s.image.pixels(i, 0) = fg.r + tex;
                s.image.pixels(i, 1) = fg.g + tex;
                s.image.pixels(i, 2) = fg.b + tex;
            }
    }
    // Quantize so the in-memory sample equals its PNG round trip.
    for (real& v : s.image.pixels.data) v = to_byte(v) / 255.0;

    for (int k = 0; k < count; ++k) {
        BinaryMask m(n, n);
        for (int i = 0; i < n * n; ++i) m.values[i] = owner[i] == k ? 1 : 0;
        s.classes.push_back(pool[k]);
        s.masks.emplace(pool[k], std::move(m));
    }
    return s;
}

bool masks_valid(const LoadedSample& s)
{
    for (const auto& [name, m] : s.masks) {
        const std::size_t c = m.count();
        if (c < kMinMaskPixels || c >= m.values.size()) return false;
    }
    return true;
}

std::filesystem::path manifest_file(const std::filesystem::path& path)
{
    return std::filesystem::is_directory(path) ? path / "manifest.json" : path;
}

json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const json& j)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace

LoadedSample render_synthetic_sample(const GeneratorParams& params, int index)
{
    if (params.classes.empty()) throw InputError("generator: no classes");
    for (const auto& c : params.classes) class_index(c);
    if (params.size < 32) throw InputError("generator: size must be >= 32");
    for (int attempt = 0; attempt < 1000; ++attempt) {
        LoadedSample s = render_attempt(params, index, attempt);
        if (masks_valid(s)) {
            s.id = sample_id(index);
            return s;
        }
    }
    throw InternalError("generator: could not place visible shapes for sample " + std::to_string(index));
}

DatasetManifest generate_synthetic_dataset(const GeneratorParams& params, const std::filesystem::path& root)
{
    if (params.n < 1) throw InputError("generator: n must be >= 1");
    DatasetManifest m;
    m.root = root;
    m.classes = params.classes;
    m.generator = params;
    for (int i = 0; i < params.n; ++i) {
        LoadedSample s = render_synthetic_sample(params, i);
        SampleRecord rec;
        rec.id = s.id;
        rec.image = "images/" + s.id + ".png";
        rec.classes = s.classes;
        write_png_rgb(root / rec.image, s.image);
        for (const auto& c : s.classes) {
            rec.masks[c] = "masks/" + c + "/" + s.id + ".png";
            write_png_mask(root / rec.masks[c], s.masks.at(c));
        }
        m.samples.push_back(std::move(rec));
    }
    save_manifest(m);
    return m;
}

void save_manifest(const DatasetManifest& m)
{
    json j;
    j["format_version"] = kFormatVersion;
    j["classes"] = m.classes;
    j["generator"] = {{"n", m.generator.n},
                      {"classes", m.generator.classes},
                      {"size", m.generator.size},
                      {"camouflage", m.generator.camouflage},
                      {"seed", m.generator.seed}};
    j["samples"] = json::array();
    for (const auto& s : m.samples)
        j["samples"].push_back({{"id", s.id}, {"image", s.image}, {"classes", s.classes}, {"masks", s.masks}});
    write_json(m.root / "manifest.json", j);
}

DatasetManifest load_manifest(const std::filesystem::path& path)
{
    const auto file = manifest_file(path);
    const json j = read_json(file);
    DatasetManifest m;
    m.root = file.parent_path();
    try {
        if (j.at("format_version").get<int>() != kFormatVersion)
            throw IoError(file.string() + ": unsupported manifest format_version");
        m.classes = j.at("classes").get<std::vector<std::string>>();
        const json& g = j.at("generator");
        m.generator = {g.at("n").get<int>(), g.at("classes").get<std::vector<std::string>>(), g.at("size").get<int>(),
                       g.at("camouflage").get<bool>(), g.at("seed").get<std::uint64_t>()};
        for (const json& s : j.at("samples")) {
            SampleRecord r;
            r.id = s.at("id").get<std::string>();
            r.image = s.at("image").get<std::string>();
            r.classes = s.at("classes").get<std::vector<std::string>>();
            r.masks = s.at("masks").get<std::map<std::string, std::string>>();
            for (const auto& c : r.classes) {
                if (std::find(m.classes.begin(), m.classes.end(), c) == m.classes.end())
                    throw IoError(file.string() + ": sample " + r.id + " uses class '" + c + "' outside the vocabulary");
                if (!r.masks.count(c)) throw IoError(file.string() + ": sample " + r.id + " has no mask for " + c);
            }
            m.samples.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw IoError(file.string() + ": " + e.what());
    }
    return m;
}

std::size_t split_size(real fraction, std::size_t n)
{
    if (!(fraction > 0.0) || fraction > 1.0) throw InputError("split fraction must be in (0, 1]");
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<real>(n) + 0.5));
    return std::clamp<std::size_t>(k, 1, n);
}

SplitManifest make_split(const DatasetManifest& manifest, real fraction, std::uint64_t seed)
{
    const std::size_t n = manifest.samples.size();
    if (n == 0) throw InputError("cannot split an empty manifest");
    const std::size_t k = split_size(fraction, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto gen = substream(seed, "split");
    for (std::size_t i = 0; i + 1 < n; ++i) std::swap(order[i], order[i + uniform_index(gen, n - i)]);
    order.resize(k);
    std::sort(order.begin(), order.end());
    SplitManifest s;
    s.parent = (manifest.root / "manifest.json").string();
    s.fraction = fraction;
    s.seed = seed;
    for (std::size_t i : order) s.ids.push_back(manifest.samples[i].id);
    return s;
}

SplitManifest complement_split(const DatasetManifest& manifest, const SplitManifest& split)
{
    const std::set<std::string> taken(split.ids.begin(), split.ids.end());
    SplitManifest s;
    s.parent = split.parent;
    s.fraction = 1.0 - split.fraction;
    s.seed = split.seed;
    for (const auto& sample : manifest.samples)
        if (!taken.contains(sample.id)) s.ids.push_back(sample.id);
    return s;
}

void save_split(const std::filesystem::path& path, const SplitManifest& split)
{
    write_json(path, {{"format_version", kFormatVersion},
                      {"parent", split.parent},
                      {"fraction", split.fraction},
                      {"seed", split.seed},
                      {"ids", split.ids}});
}

SplitManifest load_split(const std::filesystem::path& path)
{
    const json j = read_json(path);
    try {
        SplitManifest s;
        s.parent = j.at("parent").get<std::string>();
        s.fraction = j.at("fraction").get<real>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.ids = j.at("ids").get<std::vector<std::string>>();
        return s;
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

LoadedSample load_sample(const DatasetManifest& manifest, const std::string& id)
{
    const SampleRecord& rec = manifest.sample(id);
    LoadedSample s;
    s.id = id;
    s.image = read_png_rgb(manifest.root / rec.image);
    s.classes = rec.classes;
    for (const auto& c : rec.classes) {
        const auto path = manifest.root / rec.masks.at(c);
        BinaryMask m = read_png_mask(path);
        if (m.height != s.image.height || m.width != s.image.width)
            throw IoError(path.string() + ": mask size does not match its image");
        s.masks.emplace(c, std::move(m));
    }
    return s;
}

std::vector<LoadedSample> load_samples(const DatasetManifest& manifest, const std::vector<std::string>& ids)
{
    std::vector<LoadedSample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(load_sample(manifest, id));
    return out;
}

real boundary_contrast(const LoadedSample& s)
{
    real total = 0;
    int masks = 0;
    for (const auto& [name, m] : s.masks) {
        real acc = 0;
        long pairs = 0;
        auto visit = [&](int a, int b) {
            if (m.values[a] == m.values[b]) return;
            for (int c = 0; c < 3; ++c) acc += std::abs(s.image.pixels(a, c) - s.image.pixels(b, c)) / 3.0;
            ++pairs;
        };
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) {
                const int i = y * m.width + x;
                if (x + 1 < m.width) visit(i, i + 1);
                if (y + 1 < m.height) visit(i, i + m.width);
            }
        if (pairs > 0) {
            total += acc / static_cast<real>(pairs);
            ++masks;
        }
    }
    return masks > 0 ? total / masks : 0.0;
}

}  // namespace cgsam
