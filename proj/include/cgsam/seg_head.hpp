#pragma once

#include <optional>
#include <vector>

#include "cgsam/autograd.hpp"
#include "cgsam/layers.hpp"
#include "cgsam/model_config.hpp"
#include "cgsam/semantic_prompting.hpp"

namespace cgsam {

enum class PromptMode { manual, semi_automatic };

std::string to_string(PromptMode mode);
/// Accepts "manual", "semi_automatic" and "semi-automatic".
PromptMode parse_prompt_mode(const std::string& text);

struct PromptBundle {
    PointPrompts points;
    std::optional<DensePrompt> dense;
    PromptMode mode = PromptMode::semi_automatic;
};

struct MaskPrediction {
    int height = 0;
    int width = 0;
    std::vector<real> logits;

    std::vector<real> probabilities() const;
    /// probability >= threshold (equivalently logit >= logit(threshold)).
    BinaryMask binarize(real threshold = 0.5) const;
};

/// Points and dense masks to decoder-width embeddings. Positions use random
/// Fourier features from a fixed seeded Gaussian matrix (not trained).
class PromptEncoder {
public:
    PromptEncoder() = default;
    PromptEncoder(ParamBuilder& b, const ModelConfig& config);

    /// K x D: positional encoding of each pixel centre + positive-label embedding.
    Var encode_points(Graph& g, const ParameterStore& s, const std::vector<Point>& points) const;
    /// N x D at the feature grid; absent prompt gives the broadcast no-mask embedding.
    Var encode_dense(Graph& g, const ParameterStore& s, const DensePrompt* dense) const;
    /// N x D positional encoding of the feature grid cells.
    Matrix dense_positional_encoding() const;
    /// Positional encoding of normalized (x, y) coordinates in [0, 1].
    std::vector<real> positional_encoding(real x, real y) const;

private:
    int dim_ = 0;
    GridSize image_;
    GridSize grid_;
    GridSize dense_;
    Matrix gaussian_;  // 2 x D/2
    int point_embed_ = -1;
    int no_mask_embed_ = -1;
    LinearW mask_conv1_, mask_conv2_, mask_conv3_;
    LayerNormW mask_ln1_, mask_ln2_;
};

struct DecoderAttentionW {
    LinearW q, k, v, out;
    int heads = 1;
};

struct TwoWayLayerW {
    DecoderAttentionW self_attn, cross_token_to_image, cross_image_to_token;
    LayerNormW norm1, norm2, norm3, norm4;
    LinearW mlp1, mlp2;
};

/// Two-way attention decoder with a single mask token, transposed-conv
/// upscaling and a hypernetwork head.
class MaskDecoder {
public:
    MaskDecoder() = default;
    MaskDecoder(ParamBuilder& b, const ModelConfig& config);

    /// Returns mask logits at 4x the feature grid ((16 N) x 1).
    Var decode(Graph& g, const ParameterStore& s, Var image_embedding, Var image_pe, Var sparse, Var dense) const;
    GridSize output_grid() const { return {grid_.height * 4, grid_.width * 4}; }

private:
    int dim_ = 0;
    GridSize grid_;
    int mask_token_ = -1;
    std::vector<TwoWayLayerW> layers_;
    DecoderAttentionW final_attn_;
    LayerNormW norm_final_;
    LinearW up1_, up2_;
    int up1_bias_ = -1, up2_bias_ = -1;
    LayerNormW up_ln_;
    LinearW hyper1_, hyper2_, hyper3_;
};

}  // namespace cgsam
