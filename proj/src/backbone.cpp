#include <cmath>

#include "cgsam/backbone.hpp"

#include "cgsam/kernels.hpp"

namespace cgsam {

namespace {

std::string block_name(const std::string& prefix, int i) { return prefix + ".blocks." + std::to_string(i); }

}  // namespace

Matrix prepare_pixels(const Image& image, int side)
{
    if (image.pixels.rows != image.height * image.width || image.pixels.cols != 3)
        throw InputError("image pixel buffer does not match its dimensions");
    Matrix src = image.pixels;
    for (real& v : src.data) v = 2.0 * v - 1.0;
    if (image.height == side && image.width == side) return src;
    Matrix out(side * side, 3);
    kernels::bilinear_resize(src.data, out.data, 3, image.height, image.width, side, side);
    return out;
}

Var patch_embed(Graph& g, const ParameterStore& s, const LinearW& w, Var pixels, GridSize image, int patch)
{
    if (pixels.rows() != image.count() || image.height % patch != 0 || image.width % patch != 0)
        throw ConfigError("patch_embed: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                          " does not tile into patches of " + std::to_string(patch));
    return apply(g, s, w, ops::patchify(pixels, image, patch));
}

TextEncoder::TextEncoder(ParamBuilder& b, const TextEncoderConfig& config, int vocab_size, int embed_dim)
    : config_(config), vocab_size_(vocab_size)
{
    const std::string p = "text_encoder";
    token_embedding_ = b.make(p + ".token_embedding", vocab_size, config.width, InitSpec::normal(0.02));
    positional_embedding_ = b.make(p + ".positional_embedding", config.context_length, config.width, InitSpec::normal(0.01));
    for (int i = 0; i < config.depth; ++i)
        blocks_.push_back(make_block(b, block_name(p, i), config.width, config.heads, config.mlp_dim(), 1e-5));
    ln_final_ = make_layer_norm(b, p + ".ln_final", config.width, 1e-5);
    projection_ = b.make(p + ".projection", config.width, embed_dim, InitSpec::trunc_normal(std::pow(config.width, -0.5)));
}

TextEmbedding TextEncoder::encode(const ParameterStore& s, const std::vector<int>& tokens) const
{
    Graph g(GradMode::none);
    return {encode(g, s, tokens).value()};
}

Var TextEncoder::encode(Graph& g, const ParameterStore& s, const std::vector<int>& tokens) const
{
    const int n = static_cast<int>(tokens.size());
    if (n == 0 || n > config_.context_length) throw InputError("token sequence length out of range");
    // Embedding lookup as a one-hot product so the table receives gradients.
    Matrix onehot(n, vocab_size_);
    for (int i = 0; i < n; ++i) {
        if (tokens[i] < 0 || tokens[i] >= vocab_size_) throw InputError("token id outside the vocabulary");
        onehot(i, tokens[i]) = 1.0;
    }
    Var h = ops::add(ops::matmul(g.constant(std::move(onehot)), g.param(s, token_embedding_)),
                     ops::slice_rows(g.param(s, positional_embedding_), 0, n));
    for (const BlockW& blk : blocks_) {
        h = ops::add(h, self_attention(g, s, blk.attn, apply(g, s, blk.ln1, h)));
        h = ops::add(h, mlp_gelu(g, s, blk.mlp, apply(g, s, blk.ln2, h)));
    }
    Var pooled = ops::slice_rows(apply(g, s, ln_final_, h), n - 1, 1);
    return ops::matmul(pooled, g.param(s, projection_));
}

VisionLanguageEncoder::VisionLanguageEncoder(ParamBuilder& b, const EncoderConfig& config, int embed_dim)
    : config_(config), embed_dim_(embed_dim)
{
    const std::string p = "vision_encoder";
    const int w = config.width;
    patch_ = make_linear(b, p + ".patch_embed", config.patch_size * config.patch_size * 3, w, true);
    class_embedding_ = b.make(p + ".class_embedding", 1, w, InitSpec::trunc_normal());
    pos_embed_ = b.make(p + ".pos_embed", config.tokens() + 1, w, InitSpec::trunc_normal());
    ln_pre_ = make_layer_norm(b, p + ".ln_pre", w, 1e-5);
    for (int i = 0; i < config.depth; ++i)
        blocks_.push_back(make_block(b, block_name(p, i), w, config.heads, config.mlp_dim(), 1e-5));
    ln_post_ = make_layer_norm(b, p + ".ln_post", w, 1e-5);
    proj_ = b.make(p + ".proj", w, embed_dim, InitSpec::trunc_normal(std::pow(w, -0.5)));
}

Var VisionLanguageEncoder::encode(Graph& g, const ParameterStore& s, Var pixels) const
{
    const int side = config_.image_size;
    Var x = patch_embed(g, s, patch_, pixels, {side, side}, config_.patch_size);
    x = ops::add(ops::concat_rows({g.param(s, class_embedding_), x}), g.param(s, pos_embed_));
    x = apply(g, s, ln_pre_, x);
    for (const BlockW& blk : blocks_) {
        x = ops::add(x, self_attention(g, s, blk.attn, apply(g, s, blk.ln1, x)));
        x = ops::add(x, mlp_gelu(g, s, blk.mlp, apply(g, s, blk.ln2, x)));
    }
    Var patches = ops::slice_rows(apply(g, s, ln_post_, x), 1, config_.tokens());
    return ops::matmul(patches, g.param(s, proj_));
}

SegmentationEncoder::SegmentationEncoder(ParamBuilder& b, const ModelConfig& config, const BudgetPlan& plan)
    : config_(config.image_encoder), plan_(plan)
{
    const std::string p = "image_encoder";
    const int w = config_.width;
    const int d = config.decoder_dim;
    patch_ = make_linear(b, p + ".patch_embed", config_.patch_size * config_.patch_size * 3, w, true);
    pos_embed_ = b.make(p + ".pos_embed", config_.tokens(), w, InitSpec::trunc_normal());
    regular_.resize(config_.depth);
    semantic_.resize(config_.depth);
    for (int i = 0; i < config_.depth; ++i) {
        blocks_.push_back(make_block(b, block_name(p, i), w, config_.heads, config_.mlp_dim(), 1e-6));
        const std::string a = block_name("adapters", i);
        if (plan.has_regular(i)) regular_[i] = make_adapter(b, a + ".regular", w, config.adapter_ratio);
        if (plan.has_semantic(i))
            semantic_[i] = make_semantic_adapter(b, a + ".semantic", w, config.embed_dim, config.adapter_ratio);
    }
    neck_conv1_ = make_linear(b, p + ".neck.conv1", w, d, false);
    neck_ln1_ = make_layer_norm(b, p + ".neck.ln1", d, 1e-6);
    neck_conv2_ = make_linear(b, p + ".neck.conv2", 9 * d, d, false);
    neck_ln2_ = make_layer_norm(b, p + ".neck.ln2", d, 1e-6);
}

Var SegmentationEncoder::encode(Graph& g, const ParameterStore& s, Var pixels, const SemanticContext* ctx,
                                bool adapters) const
{
    const int side = config_.image_size;
    const GridSize grid = config_.grid();
    Var x = ops::add(patch_embed(g, s, patch_, pixels, {side, side}, config_.patch_size), g.param(s, pos_embed_));
    for (int i = 0; i < config_.depth; ++i) {
        const BlockW& blk = blocks_[i];
        Var h = apply(g, s, blk.ln1, x);
        x = ops::add(x, self_attention(g, s, blk.attn, h));
        if (adapters && plan_.has_regular(i)) x = ops::add(x, bottleneck(g, s, regular_[i], h));
        Var h2 = apply(g, s, blk.ln2, x);
        x = ops::add(x, mlp_gelu(g, s, blk.mlp, h2));
        if (adapters && plan_.has_semantic(i)) {
            if (ctx == nullptr) throw InternalError("semantic adapter site reached without semantic inputs");
            x = ops::add(x, semantic_adapter(g, s, semantic_[i], h2, *ctx, grid));
        }
    }
    return x;
}

Var SegmentationEncoder::neck(Graph& g, const ParameterStore& s, Var features) const
{
    Var y = apply(g, s, neck_ln1_, apply(g, s, neck_conv1_, features));
    y = apply(g, s, neck_conv2_, ops::im2col3x3(y, config_.grid()));
    return apply(g, s, neck_ln2_, y);
}

}  // namespace cgsam
