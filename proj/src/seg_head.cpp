#include "cgsam/seg_head.hpp"

#include <cmath>
#include <numbers>

#include "cgsam/rng.hpp"

namespace cgsam {

std::string to_string(PromptMode mode) { return mode == PromptMode::manual ? "manual" : "semi_automatic"; }

PromptMode parse_prompt_mode(const std::string& text)
{
    if (text == "manual") return PromptMode::manual;
    if (text == "semi_automatic" || text == "semi-automatic") return PromptMode::semi_automatic;
    throw InputError("unknown mode '" + text + "' (expected manual or semi_automatic)");
}

std::vector<real> MaskPrediction::probabilities() const
{
    std::vector<real> p(logits.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-logits[i]));
    return p;
}

BinaryMask MaskPrediction::binarize(real threshold) const
{
    BinaryMask m(height, width);
    const auto p = probabilities();
    for (std::size_t i = 0; i < p.size(); ++i) m.values[i] = p[i] >= threshold ? 1 : 0;
    return m;
}

PromptEncoder::PromptEncoder(ParamBuilder& b, const ModelConfig& config)
    : dim_(config.decoder_dim), image_(config.image_size()), grid_(config.feature_grid()),
      dense_(config.dense_prompt_size()), gaussian_(2, config.decoder_dim / 2)
{
    auto gen = substream(config.init_seed, "positional_gaussian");
    std::normal_distribution<real> normal(0.0, 1.0);
    for (real& v : gaussian_.data) v = normal(gen);

    const std::string p = "prompt_encoder";
    point_embed_ = b.make(p + ".point_embed", 1, dim_, InitSpec::normal(1.0));
    no_mask_embed_ = b.make(p + ".no_mask_embed", 1, dim_, InitSpec::normal(1.0));
    const int c1 = 4, c2 = 16;
    mask_conv1_ = make_linear(b, p + ".mask_downscaling.conv1", 4, c1, true);
    mask_ln1_ = make_layer_norm(b, p + ".mask_downscaling.ln1", c1, 1e-6);
    mask_conv2_ = make_linear(b, p + ".mask_downscaling.conv2", 4 * c1, c2, true);
    mask_ln2_ = make_layer_norm(b, p + ".mask_downscaling.ln2", c2, 1e-6);
    mask_conv3_ = make_linear(b, p + ".mask_downscaling.conv3", c2, dim_, true);
}

std::vector<real> PromptEncoder::positional_encoding(real x, real y) const
{
    const int half = dim_ / 2;
    std::vector<real> out(dim_);
    const real cx = 2.0 * x - 1.0, cy = 2.0 * y - 1.0;
    for (int j = 0; j < half; ++j) {
        const real a = 2.0 * std::numbers::pi * (cx * gaussian_(0, j) + cy * gaussian_(1, j));
        out[j] = std::sin(a);
        out[half + j] = std::cos(a);
    }
    return out;
}

Var PromptEncoder::encode_points(Graph& g, const ParameterStore& s, const std::vector<Point>& points) const
{
    if (points.empty()) throw InputError("at least one point prompt is required");
    Matrix pe(static_cast<int>(points.size()), dim_);
    for (int i = 0; i < pe.rows; ++i) {
        const Point& p = points[i];
        if (p.row < 0 || p.row >= image_.height || p.col < 0 || p.col >= image_.width)
            throw InputError("point (" + std::to_string(p.row) + ", " + std::to_string(p.col) + ") outside the " +
                             std::to_string(image_.height) + "x" + std::to_string(image_.width) + " image");
        const auto e = positional_encoding((p.col + 0.5) / image_.width, (p.row + 0.5) / image_.height);
        std::copy(e.begin(), e.end(), pe.ptr(i, 0));
    }
    return ops::add_row(g.constant(std::move(pe)), g.param(s, point_embed_));
}

Var PromptEncoder::encode_dense(Graph& g, const ParameterStore& s, const DensePrompt* dense) const
{
    if (dense == nullptr) return ops::repeat_row(g.param(s, no_mask_embed_), grid_.count());
    const BinaryMask& m = dense->values;
    if (m.height != dense_.height || m.width != dense_.width)
        throw InputError("dense prompt is " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                         ", expected " + std::to_string(dense_.height) + "x" + std::to_string(dense_.width));
    Matrix x(m.height * m.width, 1);
    for (std::size_t i = 0; i < m.values.size(); ++i) x.data[i] = m.values[i];
    Var y = ops::patchify(g.constant(std::move(x)), dense_, 2);
    y = ops::gelu(apply(g, s, mask_ln1_, apply(g, s, mask_conv1_, y)));
    y = ops::patchify(y, {dense_.height / 2, dense_.width / 2}, 2);
    y = ops::gelu(apply(g, s, mask_ln2_, apply(g, s, mask_conv2_, y)));
    return apply(g, s, mask_conv3_, y);
}

Matrix PromptEncoder::dense_positional_encoding() const
{
    Matrix pe(grid_.count(), dim_);
    for (int r = 0; r < grid_.height; ++r)
        for (int c = 0; c < grid_.width; ++c) {
            const auto e = positional_encoding((c + 0.5) / grid_.width, (r + 0.5) / grid_.height);
            std::copy(e.begin(), e.end(), pe.ptr(r * grid_.width + c, 0));
        }
    return pe;
}

namespace {

DecoderAttentionW make_attention(ParamBuilder& b, const std::string& name, int dim, int heads, int downsample)
{
    const int inner = dim / downsample;
    DecoderAttentionW w;
    w.q = make_linear(b, name + ".q_proj", dim, inner, true);
    w.k = make_linear(b, name + ".k_proj", dim, inner, true);
    w.v = make_linear(b, name + ".v_proj", dim, inner, true);
    w.out = make_linear(b, name + ".out_proj", inner, dim, true);
    w.heads = heads;
    return w;
}

Var attend(Graph& g, const ParameterStore& s, const DecoderAttentionW& w, Var q, Var k, Var v)
{
    return apply(g, s, w.out, ops::attention(apply(g, s, w.q, q), apply(g, s, w.k, k), apply(g, s, w.v, v), w.heads));
}

}  // namespace

MaskDecoder::MaskDecoder(ParamBuilder& b, const ModelConfig& config)
    : dim_(config.decoder_dim), grid_(config.feature_grid())
{
    const std::string p = "mask_decoder";
    const int d = dim_, heads = config.decoder_heads, ds = config.attention_downsample;
    mask_token_ = b.make(p + ".mask_token", 1, d, InitSpec::normal(1.0));
    for (int i = 0; i < config.decoder_depth; ++i) {
        const std::string l = p + ".layers." + std::to_string(i);
        TwoWayLayerW w;
        w.self_attn = make_attention(b, l + ".self_attn", d, heads, 1);
        w.norm1 = make_layer_norm(b, l + ".norm1", d, 1e-5);
        w.cross_token_to_image = make_attention(b, l + ".cross_token_to_image", d, heads, ds);
        w.norm2 = make_layer_norm(b, l + ".norm2", d, 1e-5);
        w.mlp1 = make_linear(b, l + ".mlp.lin1", d, config.decoder_mlp_dim, true);
        w.mlp2 = make_linear(b, l + ".mlp.lin2", config.decoder_mlp_dim, d, true);
        w.norm3 = make_layer_norm(b, l + ".norm3", d, 1e-5);
        w.norm4 = make_layer_norm(b, l + ".norm4", d, 1e-5);
        w.cross_image_to_token = make_attention(b, l + ".cross_image_to_token", d, heads, ds);
        layers_.push_back(w);
    }
    final_attn_ = make_attention(b, p + ".final_attn_token_to_image", d, heads, ds);
    norm_final_ = make_layer_norm(b, p + ".norm_final_attn", d, 1e-5);
    up1_ = make_linear(b, p + ".output_upscaling.conv1", d, 4 * (d / 4), false);
    up1_bias_ = b.make(p + ".output_upscaling.conv1.bias", 1, d / 4, InitSpec::zeros());
    up_ln_ = make_layer_norm(b, p + ".output_upscaling.ln", d / 4, 1e-6);
    up2_ = make_linear(b, p + ".output_upscaling.conv2", d / 4, 4 * (d / 8), false);
    up2_bias_ = b.make(p + ".output_upscaling.conv2.bias", 1, d / 8, InitSpec::zeros());
    hyper1_ = make_linear(b, p + ".hypernetwork.0", d, d, true);
    hyper2_ = make_linear(b, p + ".hypernetwork.1", d, d, true);
    hyper3_ = make_linear(b, p + ".hypernetwork.2", d, d / 8, true);
}

Var MaskDecoder::decode(Graph& g, const ParameterStore& s, Var image_embedding, Var image_pe, Var sparse,
                        Var dense) const
{
    if (image_embedding.rows() != grid_.count() || image_embedding.cols() != dim_ || sparse.cols() != dim_ ||
        !image_embedding.value().same_shape(dense.value()) || !image_embedding.value().same_shape(image_pe.value()))
        throw InternalError("mask decoder: inconsistent input shapes");
    Var tokens = ops::concat_rows({g.param(s, mask_token_), sparse});
    Var queries = tokens;
    Var keys = ops::add(image_embedding, dense);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const TwoWayLayerW& w = layers_[i];
        if (i == 0) {
            queries = attend(g, s, w.self_attn, queries, queries, queries);
        } else {
            Var q = ops::add(queries, tokens);
            queries = ops::add(queries, attend(g, s, w.self_attn, q, q, queries));
        }
        queries = apply(g, s, w.norm1, queries);
        Var q = ops::add(queries, tokens);
        Var k = ops::add(keys, image_pe);
        queries = apply(g, s, w.norm2, ops::add(queries, attend(g, s, w.cross_token_to_image, q, k, keys)));
        Var mlp = apply(g, s, w.mlp2, ops::relu(apply(g, s, w.mlp1, queries)));
        queries = apply(g, s, w.norm3, ops::add(queries, mlp));
        q = ops::add(queries, tokens);
        k = ops::add(keys, image_pe);
        keys = apply(g, s, w.norm4, ops::add(keys, attend(g, s, w.cross_image_to_token, k, q, queries)));
    }
    Var q = ops::add(queries, tokens);
    Var k = ops::add(keys, image_pe);
    queries = apply(g, s, norm_final_, ops::add(queries, attend(g, s, final_attn_, q, k, keys)));

    Var up = ops::pixel_shuffle2(apply(g, s, up1_, keys), grid_);
    up = ops::gelu(apply(g, s, up_ln_, ops::add_row(up, g.param(s, up1_bias_))));
    up = ops::pixel_shuffle2(apply(g, s, up2_, up), {grid_.height * 2, grid_.width * 2});
    up = ops::gelu(ops::add_row(up, g.param(s, up2_bias_)));

    Var token = ops::slice_rows(queries, 0, 1);
    Var hyper = apply(g, s, hyper3_, ops::relu(apply(g, s, hyper2_, ops::relu(apply(g, s, hyper1_, token)))));
    return ops::matmul_nt(up, hyper);
}

}  // namespace cgsam
