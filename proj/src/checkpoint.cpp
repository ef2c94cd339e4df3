#include "cgsam/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "cgsam/run_config.hpp"

namespace cgsam {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'G', 'S', 'A', 'M', 'C', 'K', '1'};
constexpr std::uint8_t kFloat64 = 1;

template <typename T>
void put(std::ostream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
public:
    Reader(std::istream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

    template <typename T>
    T get(const char* what)
    {
        T v{};
        bytes(reinterpret_cast<char*>(&v), sizeof v, what);
        return v;
    }

    void bytes(char* dst, std::size_t n, const char* what)
    {
        if (!in_.read(dst, static_cast<std::streamsize>(n)))
            throw LoadError(path_.string() + ": truncated checkpoint while reading " + what);
    }

private:
    std::istream& in_;
    const std::filesystem::path& path_;
};

struct Contents {
    nlohmann::json manifest;
    std::vector<std::pair<std::string, Matrix>> tensors;
};

Contents read_contents(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path.string());
    Reader r(in, path);
    char magic[8];
    r.bytes(magic, 8, "magic");
    if (std::memcmp(magic, kMagic, 8) != 0) throw LoadError(path.string() + ": not a checkpoint file");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw VersionMismatch(path.string() + ": checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));

    Contents c;
    const auto manifest_len = r.get<std::uint64_t>("manifest length");
    std::string text(manifest_len, '\0');
    r.bytes(text.data(), manifest_len, "manifest");
    try {
        c.manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw LoadError(path.string() + ": corrupt manifest: " + e.what());
    }

    const auto count = r.get<std::uint64_t>("tensor count");
    for (std::uint64_t t = 0; t < count; ++t) {
        const auto name_len = r.get<std::uint32_t>("tensor name length");
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len, "tensor name");
        if (r.get<std::uint8_t>("dtype") != kFloat64) throw LoadError(path.string() + ": " + name + ": unsupported dtype");
        if (r.get<std::uint32_t>("ndim") != 2) throw LoadError(path.string() + ": " + name + ": expected 2 dimensions");
        const auto rows = r.get<std::uint64_t>("dims");
        const auto cols = r.get<std::uint64_t>("dims");
        if (rows > (1u << 30) || cols > (1u << 30)) throw LoadError(path.string() + ": " + name + ": implausible shape");
        Matrix m(static_cast<int>(rows), static_cast<int>(cols));
        r.bytes(reinterpret_cast<char*>(m.data.data()), m.data.size() * sizeof(real), "tensor data");
        c.tensors.emplace_back(std::move(name), std::move(m));
    }
    return c;
}

void fill(ClipGuidedSam& model, std::vector<std::pair<std::string, Matrix>>& tensors, const std::filesystem::path& path)
{
    ParameterStore& store = model.params();
    std::set<int> seen;
    for (auto& [name, m] : tensors) {
        const int i = store.find(name);
        if (i < 0) throw LoadError(path.string() + ": unexpected tensor " + name);
        if (!m.same_shape(store[i].value))
            throw LoadError(path.string() + ": tensor " + name + " has shape " + std::to_string(m.rows) + "x" +
                            std::to_string(m.cols) + ", model expects " + std::to_string(store[i].value.rows) + "x" +
                            std::to_string(store[i].value.cols));
        if (!seen.insert(i).second) throw LoadError(path.string() + ": duplicate tensor " + name);
        store[i].value = std::move(m);
    }
    for (int i = 0; i < store.size(); ++i)
        if (!seen.contains(i)) throw LoadError(path.string() + ": missing tensor " + store[i].name);
    model.clear_text_cache();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ClipGuidedSam& model, const nlohmann::json& extra)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(kMagic, 8);
        put<std::uint32_t>(out, kCheckpointVersion);
        const std::string manifest = nlohmann::json{{"model", to_json(model.config())}, {"extra", extra}}.dump();
        put<std::uint64_t>(out, manifest.size());
        out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
        const ParameterStore& store = model.params();
        put<std::uint64_t>(out, static_cast<std::uint64_t>(store.size()));
        for (const Parameter& p : store) {
            put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
            out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
            put<std::uint8_t>(out, kFloat64);
            put<std::uint32_t>(out, 2);
            put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.rows));
            put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.cols));
            out.write(reinterpret_cast<const char*>(p.value.data.data()),
                      static_cast<std::streamsize>(p.value.data.size() * sizeof(real)));
        }
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path)
{
    Contents c = read_contents(path);
    LoadedCheckpoint out;
    try {
        out.model = std::make_unique<ClipGuidedSam>(model_config_from_json(c.manifest.at("model")));
    } catch (const ConfigError& e) {
        throw LoadError(path.string() + ": stored config is invalid: " + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(path.string() + ": manifest has no model config");
    }
    fill(*out.model, c.tensors, path);
    out.extra = c.manifest.value("extra", nlohmann::json::object());
    return out;
}

void load_weights(const std::filesystem::path& path, ClipGuidedSam& model)
{
    Contents c = read_contents(path);
    ModelConfig stored;
    try {
        stored = model_config_from_json(c.manifest.at("model"));
    } catch (const std::exception& e) {
        throw LoadError(path.string() + ": manifest has no usable model config");
    }
    stored.init_seed = model.config().init_seed;  // overwritten by the stored weights anyway
    if (!(stored == model.config())) throw LoadError(path.string() + ": checkpoint config does not match the model");
    fill(model, c.tensors, path);
}

}  // namespace cgsam
