#include "cgsam/model.hpp"

#include <algorithm>

namespace cgsam {

namespace {

const char* const kComponents[] = {"image_encoder", "prompt_encoder", "mask_decoder", "vision_encoder", "text_encoder"};

std::string component_of(const std::string& name)
{
    const std::string head = name.substr(0, name.find('.'));
    return head == "adapters" ? "image_encoder" : head;
}

int text_vocab_size(const ModelConfig& config, const Tokenizer& tokenizer)
{
    const int v = config.text_encoder.vocab_size;
    if (v == 0) return tokenizer.size();
    if (v < tokenizer.size())
        throw ConfigError("model.text_encoder.vocab_size: " + std::to_string(v) + " is smaller than the " +
                          std::to_string(tokenizer.size()) + "-word tokenizer vocabulary");
    return v;
}

BudgetPlan plan_for(const ModelConfig& c)
{
    return configure_budget(c.clip_trainable_blocks, c.semantic_adapter_blocks, c.vision_encoder, c.image_encoder,
                            c.regular_adapters);
}

}  // namespace

const ParamReportEntry& ParamReport::at(const std::string& name) const
{
    for (const auto& e : entries)
        if (e.name == name) return e;
    throw InternalError("ParamReport: no component " + name);
}

std::size_t ParamReport::base_segmentation() const
{
    return vanilla_image_encoder() + at("prompt_encoder").total + at("mask_decoder").total;
}

real ParamReport::adapter_overhead_percent() const
{
    const std::size_t base = vanilla_image_encoder();
    return base == 0 ? 0.0 : 100.0 * static_cast<real>(adapters) / static_cast<real>(base);
}

ParamReport count_parameters(const std::vector<std::pair<std::string, std::size_t>>& shapes,
                             const TrainablePredicate& trainable)
{
    ParamReport r;
    for (const char* c : kComponents) r.entries.push_back({c, 0, 0});
    for (const auto& [name, n] : shapes) {
        const std::string comp = component_of(name);
        auto it = std::find_if(r.entries.begin(), r.entries.end(), [&](const auto& e) { return e.name == comp; });
        if (it == r.entries.end()) throw InternalError("parameter outside every component: " + name);
        it->total += n;
        if (trainable(name)) it->trainable += n;
        if (name.starts_with("adapters.")) r.adapters += n;
    }
    for (const auto& e : r.entries) {
        r.total += e.total;
        r.trainable += e.trainable;
    }
    return r;
}

ClipGuidedSam::ClipGuidedSam(const ModelConfig& config)
    : config_(config), plan_((config.validate(), plan_for(config))), tokenizer_(Tokenizer::for_config(config))
{
    ParamBuilder b(store_, config_.init_seed);
    text_encoder_ = TextEncoder(b, config_.text_encoder, text_vocab_size(config_, tokenizer_), config_.embed_dim);
    patch_encoder_ = std::make_shared<VisionLanguageEncoder>(b, config_.vision_encoder, config_.embed_dim);
    seg_encoder_ = SegmentationEncoder(b, config_, plan_);
    prompt_encoder_ = PromptEncoder(b, config_);
    mask_decoder_ = MaskDecoder(b, config_);
    image_pe_ = prompt_encoder_.dense_positional_encoding();
}

ParamReport ClipGuidedSam::count(const ModelConfig& config, const TrainablePredicate& trainable)
{
    config.validate();
    const Tokenizer tokenizer = Tokenizer::for_config(config);
    ParamBuilder b = ParamBuilder::counting();
    TextEncoder(b, config.text_encoder, text_vocab_size(config, tokenizer), config.embed_dim);
    VisionLanguageEncoder(b, config.vision_encoder, config.embed_dim);
    SegmentationEncoder(b, config, plan_for(config));
    PromptEncoder(b, config);
    MaskDecoder(b, config);
    return count_parameters(b.shapes(), trainable);
}

void ClipGuidedSam::set_patch_encoder(std::shared_ptr<const PatchEncoder> encoder)
{
    if (!encoder || encoder->embed_dim() != config_.embed_dim)
        throw ConfigError("replacement patch encoder must produce " + std::to_string(config_.embed_dim) + " channels");
    patch_encoder_ = std::move(encoder);
}

TextEmbedding ClipGuidedSam::encode_text(std::string_view prompt) const
{
    const auto tokens = tokenizer_.encode(prompt, config_.text_encoder.context_length);
    {
        std::lock_guard lock(text_mutex_);
        ++text_runs_;
    }
    return text_encoder_.encode(store_, tokens);
}

TextEmbedding ClipGuidedSam::class_embedding(const std::string& class_name) const
{
    {
        std::lock_guard lock(text_mutex_);
        if (auto it = text_cache_.find(class_name); it != text_cache_.end()) return it->second;
    }
    if (split_words(class_name).empty()) throw InputError("empty class name");
    TextEmbedding t = encode_text(render_prompt(config_.prompt_template, class_name));
    std::lock_guard lock(text_mutex_);
    return text_cache_.emplace(class_name, std::move(t)).first->second;
}

Var ClipGuidedSam::class_text_features(Graph& g, const std::string& class_name) const
{
    if (split_words(class_name).empty()) throw InputError("empty class name");
    const auto tokens =
        tokenizer_.encode(render_prompt(config_.prompt_template, class_name), config_.text_encoder.context_length);
    return text_encoder_.encode(g, store_, tokens);
}

std::size_t ClipGuidedSam::text_encoder_runs() const
{
    std::lock_guard lock(text_mutex_);
    return text_runs_;
}

void ClipGuidedSam::clear_text_cache()
{
    std::lock_guard lock(text_mutex_);
    text_cache_.clear();
}

void ClipGuidedSam::check_image(const Image& image) const
{
    const int side = config_.image_encoder.image_size;
    if (image.height != side || image.width != side)
        throw ConfigError("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                          ", model expects " + std::to_string(side) + "x" + std::to_string(side));
}

Var ClipGuidedSam::vision_features(Graph& g, const Image& image) const
{
    check_image(image);
    const int side = patch_encoder_->input_side();
    return patch_encoder_->encode(g, store_, g.constant(prepare_pixels(image, side)));
}

PatchEmbeddings ClipGuidedSam::encode_image_vl(const Image& image) const
{
    Graph g;
    return {vision_features(g, image).value(), patch_encoder_->grid()};
}

FeatureMap ClipGuidedSam::encode_image_seg(const Image& image, const SemanticInputs& semantic, bool adapters) const
{
    check_image(image);
    Graph g;
    const SemanticContext ctx{g.constant(semantic.v.values), g.constant(semantic.s.values),
                              g.constant(semantic.t.values), semantic.v.grid, config_.modalities};
    const int side = config_.image_encoder.image_size;
    Var f = seg_encoder_.encode(g, store_, g.constant(prepare_pixels(image, side)), &ctx, adapters);
    return {f.value(), config_.feature_grid(), config_.image_encoder.depth - 1};
}

Var ClipGuidedSam::segment(Graph& g, const Image& image, const SemanticContext* ctx, const PromptBundle& prompts,
                           bool adapters) const
{
    check_image(image);
    const int side = config_.image_encoder.image_size;
    Var features = seg_encoder_.encode(g, store_, g.constant(prepare_pixels(image, side)), ctx, adapters);
    Var embedding = seg_encoder_.neck(g, store_, features);
    Var sparse = prompt_encoder_.encode_points(g, store_, prompts.points.points);
    Var dense = prompt_encoder_.encode_dense(g, store_, prompts.dense ? &*prompts.dense : nullptr);
    Var low = mask_decoder_.decode(g, store_, embedding, g.constant(image_pe_), sparse, dense);
    return ops::bilinear_resize(low, mask_decoder_.output_grid(), image.size());
}

}  // namespace cgsam
