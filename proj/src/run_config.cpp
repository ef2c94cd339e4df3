#include "cgsam/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace cgsam {

using nlohmann::json;

namespace {

/// Reads fields of one JSON object and rejects what it did not consume.
class FieldReader {
public:
    FieldReader(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    std::string field(const std::string& key) const { return path_ + "." + key; }

    const json* find(const std::string& key)
    {
        const auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        used_.insert(key);
        return &*it;
    }

    void read(const std::string& key, int& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) fail(key, "expected an integer");
            out = v->get<int>();
        }
    }
    void read(const std::string& key, std::uint64_t& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
                fail(key, "expected a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void read(const std::string& key, real& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_number()) fail(key, "expected a number");
            out = v->get<real>();
        }
    }
    void read(const std::string& key, bool& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) fail(key, "expected true or false");
            out = v->get<bool>();
        }
    }
    void read(const std::string& key, std::string& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_string()) fail(key, "expected a string");
            out = v->get<std::string>();
        }
    }
    void read(const std::string& key, std::filesystem::path& out)
    {
        std::string s = out.string();
        read(key, s);
        out = s;
    }
    void read(const std::string& key, std::vector<std::string>& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_array()) fail(key, "expected an array of strings");
            out.clear();
            for (const json& e : *v) {
                if (!e.is_string()) fail(key, "expected an array of strings");
                out.push_back(e.get<std::string>());
            }
        }
    }
    void read(const std::string& key, PromptMode& out)
    {
        std::string s = to_string(out);
        read(key, s);
        try {
            out = parse_prompt_mode(s);
        } catch (const InputError& e) {
            fail(key, e.what());
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const
    {
        throw ConfigError(field(key) + ": " + what);
    }

    /// Throws on the first key that no read() consumed.
    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.contains(it.key())) throw ConfigError(field(it.key()) + ": unknown field");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

json to_json(const EncoderConfig& c)
{
    return {{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"depth", c.depth},
            {"width", c.width},           {"heads", c.heads},           {"mlp_ratio", c.mlp_ratio}};
}

EncoderConfig encoder_from_json(const json& j, const std::string& path, EncoderConfig c)
{
    FieldReader r(j, path);
    r.read("image_size", c.image_size);
    r.read("patch_size", c.patch_size);
    r.read("depth", c.depth);
    r.read("width", c.width);
    r.read("heads", c.heads);
    r.read("mlp_ratio", c.mlp_ratio);
    r.finish();
    return c;
}

json to_json(const TextEncoderConfig& c)
{
    return {{"vocab_size", c.vocab_size}, {"context_length", c.context_length}, {"depth", c.depth},
            {"width", c.width},           {"heads", c.heads},                   {"mlp_ratio", c.mlp_ratio}};
}

TextEncoderConfig text_from_json(const json& j, const std::string& path, TextEncoderConfig c)
{
    FieldReader r(j, path);
    r.read("vocab_size", c.vocab_size);
    r.read("context_length", c.context_length);
    r.read("depth", c.depth);
    r.read("width", c.width);
    r.read("heads", c.heads);
    r.read("mlp_ratio", c.mlp_ratio);
    r.finish();
    return c;
}

}  // namespace

json to_json(const ModelConfig& c)
{
    return {{"image_encoder", to_json(c.image_encoder)},
            {"vision_encoder", to_json(c.vision_encoder)},
            {"text_encoder", to_json(c.text_encoder)},
            {"embed_dim", c.embed_dim},
            {"decoder_dim", c.decoder_dim},
            {"decoder_depth", c.decoder_depth},
            {"decoder_heads", c.decoder_heads},
            {"decoder_mlp_dim", c.decoder_mlp_dim},
            {"attention_downsample", c.attention_downsample},
            {"adapter_ratio", c.adapter_ratio},
            {"dense_prompt_scale", c.dense_prompt_scale},
            {"clip_trainable_blocks", c.clip_trainable_blocks},
            {"semantic_adapter_blocks", c.semantic_adapter_blocks},
            {"regular_adapters", c.regular_adapters},
            {"modalities",
             {{"text", c.modalities.text}, {"vision", c.modalities.vision}, {"similarity", c.modalities.similarity}}},
            {"prompt_template", c.prompt_template},
            {"classes", c.classes},
            {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const json& j, const std::string& field)
{
    FieldReader r(j, field);
    std::string preset = "toy";
    r.read("preset", preset);
    ModelConfig c;
    if (preset == "toy") c = ModelConfig::toy();
    else if (preset == "vit_b") c = ModelConfig::vit_b();
    else r.fail("preset", "expected \"toy\" or \"vit_b\", got \"" + preset + "\"");

    if (const json* v = r.find("image_encoder")) c.image_encoder = encoder_from_json(*v, r.field("image_encoder"), c.image_encoder);
    if (const json* v = r.find("vision_encoder"))
        c.vision_encoder = encoder_from_json(*v, r.field("vision_encoder"), c.vision_encoder);
    if (const json* v = r.find("text_encoder")) c.text_encoder = text_from_json(*v, r.field("text_encoder"), c.text_encoder);
    r.read("embed_dim", c.embed_dim);
    r.read("decoder_dim", c.decoder_dim);
    r.read("decoder_depth", c.decoder_depth);
    r.read("decoder_heads", c.decoder_heads);
    r.read("decoder_mlp_dim", c.decoder_mlp_dim);
    r.read("attention_downsample", c.attention_downsample);
    r.read("adapter_ratio", c.adapter_ratio);
    r.read("dense_prompt_scale", c.dense_prompt_scale);
    r.read("clip_trainable_blocks", c.clip_trainable_blocks);
    r.read("semantic_adapter_blocks", c.semantic_adapter_blocks);
    r.read("regular_adapters", c.regular_adapters);
    if (const json* v = r.find("modalities")) {
        FieldReader m(*v, r.field("modalities"));
        m.read("text", c.modalities.text);
        m.read("vision", c.modalities.vision);
        m.read("similarity", c.modalities.similarity);
        m.finish();
    }
    r.read("prompt_template", c.prompt_template);
    r.read("classes", c.classes);
    r.read("init_seed", c.init_seed);
    r.finish();
    return c;
}

json to_json(const TrainConfig& c)
{
    return {{"mode", to_string(c.mode)},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr", c.optimizer.lr},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps},
            {"weight_decay", c.optimizer.weight_decay},
            {"seed", c.seed},
            {"loss", {{"bce", c.loss.bce}, {"dice", c.loss.dice}, {"iou", c.loss.iou}}},
            {"tau", c.tau},
            {"k", c.k},
            {"freeze",
             {{"prompt_encoder", c.freeze.prompt_encoder},
              {"mask_decoder", c.freeze.mask_decoder},
              {"adapters", c.freeze.adapters},
              {"vision_attention", c.freeze.vision_attention}}},
            {"pre_finetune_clip_epochs", c.pre_finetune_clip_epochs},
            {"eval_threshold", c.eval_threshold}};
}

TrainConfig train_config_from_json(const json& j, const std::string& field)
{
    FieldReader r(j, field);
    TrainConfig c;
    r.read("mode", c.mode);
    r.read("epochs", c.epochs);
    r.read("batch_size", c.batch_size);
    r.read("lr", c.optimizer.lr);
    r.read("beta1", c.optimizer.beta1);
    r.read("beta2", c.optimizer.beta2);
    r.read("eps", c.optimizer.eps);
    r.read("weight_decay", c.optimizer.weight_decay);
    r.read("seed", c.seed);
    if (const json* v = r.find("loss")) {
        FieldReader l(*v, r.field("loss"));
        l.read("bce", c.loss.bce);
        l.read("dice", c.loss.dice);
        l.read("iou", c.loss.iou);
        l.finish();
    }
    r.read("tau", c.tau);
    r.read("k", c.k);
    if (const json* v = r.find("freeze")) {
        // true = the group trains
        FieldReader f(*v, r.field("freeze"));
        f.read("prompt_encoder", c.freeze.prompt_encoder);
        f.read("mask_decoder", c.freeze.mask_decoder);
        f.read("adapters", c.freeze.adapters);
        f.read("vision_attention", c.freeze.vision_attention);
        f.finish();
    }
    r.read("pre_finetune_clip_epochs", c.pre_finetune_clip_epochs);
    r.read("eval_threshold", c.eval_threshold);
    r.finish();
    return c;
}

json to_json(const GeneratorParams& p)
{
    return {{"n", p.n}, {"classes", p.classes}, {"size", p.size}, {"camouflage", p.camouflage}, {"seed", p.seed}};
}

GeneratorParams generator_from_json(const json& j, const std::string& field)
{
    FieldReader r(j, field);
    GeneratorParams p;
    r.read("n", p.n);
    r.read("classes", p.classes);
    r.read("size", p.size);
    r.read("camouflage", p.camouflage);
    r.read("seed", p.seed);
    r.finish();
    return p;
}

json to_json(const RunConfig& c)
{
    return {{"model", to_json(c.model)},
            {"train", to_json(c.train)},
            {"generator", to_json(c.generator)},
            {"dataset", c.dataset.string()},
            {"train_split", c.train_split.string()},
            {"val_split", c.val_split.string()},
            {"output_dir", c.output_dir.string()}};
}

RunConfig run_config_from_json(const json& j)
{
    FieldReader r(j, "config");
    RunConfig c;
    if (const json* v = r.find("model")) c.model = model_config_from_json(*v, "model");
    if (const json* v = r.find("train")) c.train = train_config_from_json(*v, "train");
    if (const json* v = r.find("generator")) c.generator = generator_from_json(*v, "generator");
    r.read("dataset", c.dataset);
    r.read("train_split", c.train_split);
    r.read("val_split", c.val_split);
    r.read("output_dir", c.output_dir);
    r.finish();
    c.validate();
    return c;
}

void RunConfig::validate() const
{
    model.validate();
    train.validate();
    if (generator.n < 1) throw ConfigError("generator.n: must be >= 1");
    if (generator.size < 16) throw ConfigError("generator.size: must be >= 16");
    if (generator.classes.empty()) throw ConfigError("generator.classes: must not be empty");
    for (const auto& c : generator.classes) {
        const auto& known = synthetic_classes();
        if (std::find(known.begin(), known.end(), c) == known.end())
            throw ConfigError("generator.classes: unknown synthetic class '" + c + "'");
    }
    if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json(config).dump(2) << '\n';
}

}  // namespace cgsam
