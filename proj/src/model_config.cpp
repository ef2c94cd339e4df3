#include <cmath>
#include <set>

#include "cgsam/model_config.hpp"

namespace cgsam {

namespace {

void require(bool ok, const std::string& field, const std::string& what)
{
    if (!ok) throw ConfigError(field + ": " + what);
}

}  // namespace

int EncoderConfig::mlp_dim() const { return static_cast<int>(std::lround(width * mlp_ratio)); }
int TextEncoderConfig::mlp_dim() const { return static_cast<int>(std::lround(width * mlp_ratio)); }

void EncoderConfig::validate(const std::string& p) const
{
    require(patch_size >= 1, p + ".patch_size", "must be >= 1");
    require(image_size >= patch_size, p + ".image_size", "must be >= patch_size");
    require(image_size % patch_size == 0, p + ".image_size", "must be divisible by patch_size");
    require(depth >= 1, p + ".depth", "must be >= 1");
    require(heads >= 1, p + ".heads", "must be >= 1");
    require(width >= 1 && width % heads == 0, p + ".width", "must be a positive multiple of heads");
    require(mlp_ratio > 0, p + ".mlp_ratio", "must be positive");
}

void TextEncoderConfig::validate(const std::string& p) const
{
    require(vocab_size >= 0, p + ".vocab_size", "must be >= 0");
    require(context_length >= 3, p + ".context_length", "must be >= 3");
    require(depth >= 1, p + ".depth", "must be >= 1");
    require(heads >= 1, p + ".heads", "must be >= 1");
    require(width >= 1 && width % heads == 0, p + ".width", "must be a positive multiple of heads");
    require(mlp_ratio > 0, p + ".mlp_ratio", "must be positive");
}

void ModelConfig::validate() const
{
    image_encoder.validate("model.image_encoder");
    vision_encoder.validate("model.vision_encoder");
    text_encoder.validate("model.text_encoder");
    require(embed_dim >= 1, "model.embed_dim", "must be >= 1");
    require(decoder_dim >= 8 && decoder_dim % 8 == 0, "model.decoder_dim", "must be a positive multiple of 8");
    require(decoder_depth >= 1, "model.decoder_depth", "must be >= 1");
    require(decoder_heads >= 1, "model.decoder_heads", "must be >= 1");
    require(attention_downsample >= 1 && decoder_dim % attention_downsample == 0, "model.attention_downsample",
            "must divide decoder_dim");
    require((decoder_dim / attention_downsample) % decoder_heads == 0, "model.decoder_heads",
            "must divide decoder_dim / attention_downsample");
    require(decoder_dim % decoder_heads == 0, "model.decoder_heads", "must divide decoder_dim");
    require(decoder_mlp_dim >= 1, "model.decoder_mlp_dim", "must be >= 1");
    require(adapter_ratio >= 1 && image_encoder.width % adapter_ratio == 0, "model.adapter_ratio",
            "must divide image_encoder.width");
    require(dense_prompt_scale == 4, "model.dense_prompt_scale", "only 4 is supported");
    require(clip_trainable_blocks >= 0 && clip_trainable_blocks <= vision_encoder.depth, "model.clip_trainable_blocks",
            "must be within [0, vision_encoder.depth]");
    require(semantic_adapter_blocks >= 0 && semantic_adapter_blocks <= image_encoder.depth,
            "model.semantic_adapter_blocks", "must be within [0, image_encoder.depth]");
    require(prompt_template.find("{}") != std::string::npos, "model.prompt_template", "must contain {}");
    require(!classes.empty(), "model.classes", "must not be empty");
    std::set<std::string> seen;
    for (const auto& c : classes) {
        require(!c.empty(), "model.classes", "empty class name");
        require(seen.insert(c).second, "model.classes", "duplicate class name '" + c + "'");
    }
}

GridSize ModelConfig::dense_prompt_size() const
{
    const GridSize g = feature_grid();
    return {g.height * dense_prompt_scale, g.width * dense_prompt_scale};
}

ModelConfig ModelConfig::toy()
{
    ModelConfig c;
    c.image_encoder = {96, 8, 2, 32, 2, 4.0};
    c.vision_encoder = {96, 12, 2, 32, 2, 4.0};
    c.text_encoder = {0, 16, 1, 32, 2, 4.0};
    c.embed_dim = 32;
    c.decoder_dim = 32;
    c.decoder_depth = 2;
    c.decoder_heads = 2;
    c.decoder_mlp_dim = 64;
    c.attention_downsample = 2;
    c.clip_trainable_blocks = 2;
    c.semantic_adapter_blocks = 2;
    return c;
}

ModelConfig ModelConfig::vit_b()
{
    ModelConfig c;
    c.image_encoder = {1024, 16, 12, 768, 12, 4.0};
    c.vision_encoder = {224, 16, 12, 768, 12, 4.0};
    c.text_encoder = {49408, 77, 12, 512, 8, 4.0};
    c.embed_dim = 512;
    c.decoder_dim = 256;
    c.decoder_depth = 2;
    c.decoder_heads = 8;
    c.decoder_mlp_dim = 2048;
    c.attention_downsample = 2;
    c.clip_trainable_blocks = 12;
    c.semantic_adapter_blocks = 12;
    return c;
}

}  // namespace cgsam
