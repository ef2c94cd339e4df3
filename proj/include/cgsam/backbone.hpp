#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cgsam/autograd.hpp"
#include "cgsam/conditioning.hpp"
#include "cgsam/image.hpp"
#include "cgsam/layers.hpp"
#include "cgsam/model_config.hpp"

namespace cgsam {

/// Per-patch vision-language features V (N x C_c), class token removed.
struct PatchEmbeddings {
    Matrix values;
    GridSize grid;
};

/// Global prompt embedding t, stored as a 1 x C_c row.
struct TextEmbedding {
    Matrix values;
};

/// Segmentation encoder output F (N x C_l) and the block it came from.
struct FeatureMap {
    Matrix values;
    GridSize grid;
    int layer_index = 0;
};

/// Lowercase whitespace tokenizer over a closed vocabulary. Unknown words map
/// to <unk>, which has its own learned embedding.
class Tokenizer {
public:
    static constexpr int pad = 0;
    static constexpr int sot = 1;
    static constexpr int eot = 2;
    static constexpr int unk = 3;

    explicit Tokenizer(const std::vector<std::string>& words);
    /// Vocabulary = words of the prompt template followed by the class names.
    static Tokenizer for_config(const ModelConfig& config);

    /// <sot> tokens... <eot>, truncated to context_length (keeps <eot>).
    std::vector<int> encode(std::string_view text, int context_length) const;
    int size() const { return static_cast<int>(words_.size()); }
    const std::vector<std::string>& words() const { return words_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> ids_;
};

std::vector<std::string> split_words(std::string_view text);
/// Substitutes the class name for "{}" in the template.
std::string render_prompt(std::string_view prompt_template, std::string_view class_name);

/// Normalizes [0,1] pixels to [-1,1] and resamples to side x side when needed.
Matrix prepare_pixels(const Image& image, int side);

/// Non-overlapping patch projection: (side*side) x 3 -> N x width.
Var patch_embed(Graph& g, const ParameterStore& s, const LinearW& w, Var pixels, GridSize image, int patch);

class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(ParamBuilder& b, const TextEncoderConfig& config, int vocab_size, int embed_dim);

    /// Pools the <eot> position after the final norm and projects to C_c.
    TextEmbedding encode(const ParameterStore& s, const std::vector<int>& tokens) const;
    /// Graph form of encode (1 x C_c), differentiable in the tower weights.
    Var encode(Graph& g, const ParameterStore& s, const std::vector<int>& tokens) const;

private:
    TextEncoderConfig config_;
    int vocab_size_ = 0;
    int token_embedding_ = -1;
    int positional_embedding_ = -1;
    std::vector<BlockW> blocks_;
    LayerNormW ln_final_;
    int projection_ = -1;
};

/// Image tower producing per-patch vision-language embeddings. Alternative
/// towers plug in by implementing this interface.
class PatchEncoder {
public:
    virtual ~PatchEncoder() = default;
    /// pixels: prepared (side*side) x 3 input. Returns N x C_c.
    virtual Var encode(Graph& g, const ParameterStore& s, Var pixels) const = 0;
    virtual int input_side() const = 0;
    virtual GridSize grid() const = 0;
    virtual int embed_dim() const = 0;
};

/// Standard dual-encoder image tower: patch embedding, class token, learned
/// positions, pre-norm blocks, final norm and projection on every token.
class VisionLanguageEncoder final : public PatchEncoder {
public:
    VisionLanguageEncoder(ParamBuilder& b, const EncoderConfig& config, int embed_dim);

    Var encode(Graph& g, const ParameterStore& s, Var pixels) const override;
    int input_side() const override { return config_.image_size; }
    GridSize grid() const override { return config_.grid(); }
    int embed_dim() const override { return embed_dim_; }

private:
    EncoderConfig config_;
    int embed_dim_;
    LinearW patch_;
    int class_embedding_ = -1;
    int pos_embed_ = -1;
    LayerNormW ln_pre_;
    std::vector<BlockW> blocks_;
    LayerNormW ln_post_;
    int proj_ = -1;
};

/// Segmentation image encoder with adapter sites and the convolutional neck.
class SegmentationEncoder {
public:
    SegmentationEncoder() = default;
    SegmentationEncoder(ParamBuilder& b, const ModelConfig& config, const BudgetPlan& plan);

    /// Output of the last block (N x width). ctx may be null when the plan has
    /// no semantic sites; adapters=false runs the vanilla encoder.
    Var encode(Graph& g, const ParameterStore& s, Var pixels, const SemanticContext* ctx, bool adapters = true) const;
    /// Neck: 1x1 projection, norm, 3x3 conv, norm (N x decoder_dim).
    Var neck(Graph& g, const ParameterStore& s, Var features) const;

    const EncoderConfig& config() const { return config_; }

private:
    EncoderConfig config_;
    BudgetPlan plan_;
    LinearW patch_;
    int pos_embed_ = -1;
    std::vector<BlockW> blocks_;
    std::vector<AdapterW> regular_;           // indexed by block, unused entries hold -1
    std::vector<SemanticAdapterW> semantic_;  // idem
    LinearW neck_conv1_;
    LayerNormW neck_ln1_;
    LinearW neck_conv2_;
    LayerNormW neck_ln2_;
};

}  // namespace cgsam
