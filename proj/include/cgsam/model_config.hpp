#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgsam/tensor.hpp"

namespace cgsam {

/// Vision transformer shape.
struct EncoderConfig {
    int image_size = 96;
    int patch_size = 8;
    int depth = 2;
    int width = 32;
    int heads = 2;
    real mlp_ratio = 4.0;

    /// Throws ConfigError naming `field_prefix`.<field> on violation.
    void validate(const std::string& field_prefix) const;
    int grid_side() const { return image_size / patch_size; }
    GridSize grid() const { return {grid_side(), grid_side()}; }
    int tokens() const { return grid_side() * grid_side(); }
    int mlp_dim() const;
    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct TextEncoderConfig {
    /// 0 sizes the embedding table to the tokenizer vocabulary.
    int vocab_size = 0;
    int context_length = 16;
    int depth = 1;
    int width = 32;
    int heads = 2;
    real mlp_ratio = 4.0;

    void validate(const std::string& field_prefix) const;
    int mlp_dim() const;
    friend bool operator==(const TextEncoderConfig&, const TextEncoderConfig&) = default;
};

/// Which semantic signals reach the semantic adapters.
struct Modalities {
    bool text = true;
    bool vision = true;
    bool similarity = true;
    friend bool operator==(const Modalities&, const Modalities&) = default;
};

struct ModelConfig {
    EncoderConfig image_encoder;   // segmentation backbone
    EncoderConfig vision_encoder;  // vision-language image tower
    TextEncoderConfig text_encoder;
    int embed_dim = 32;       // shared vision-language embedding width
    int decoder_dim = 32;     // neck output, prompt and decoder width
    int decoder_depth = 2;
    int decoder_heads = 2;
    int decoder_mlp_dim = 128;
    int attention_downsample = 2;
    int adapter_ratio = 4;
    int dense_prompt_scale = 4;  // dense prompt side = scale * feature grid side
    int clip_trainable_blocks = 2;   // C
    int semantic_adapter_blocks = 2; // S
    bool regular_adapters = true;
    Modalities modalities;
    std::string prompt_template = "a photo of a {}";
    std::vector<std::string> classes = {"circle", "square", "triangle", "cross", "ring", "bar"};
    std::uint64_t init_seed = 0;

    void validate() const;
    GridSize feature_grid() const { return image_encoder.grid(); }
    GridSize dense_prompt_size() const;
    GridSize image_size() const { return {image_encoder.image_size, image_encoder.image_size}; }

    /// Small configuration used for desk-scale training and tests.
    static ModelConfig toy();
    /// Base-size dimensions used for parameter accounting.
    static ModelConfig vit_b();
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace cgsam
