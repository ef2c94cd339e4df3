#include "cgsam/layers.hpp"

namespace cgsam {

LinearW make_linear(ParamBuilder& b, const std::string& name, int in, int out, bool bias, InitSpec init)
{
    LinearW w;
    w.weight = b.make(name + ".weight", in, out, init);
    if (bias) w.bias = b.make(name + ".bias", 1, out, InitSpec::zeros());
    return w;
}

LayerNormW make_layer_norm(ParamBuilder& b, const std::string& name, int width, real eps)
{
    LayerNormW w;
    w.gamma = b.make(name + ".weight", 1, width, InitSpec::ones());
    w.beta = b.make(name + ".bias", 1, width, InitSpec::zeros());
    w.eps = eps;
    return w;
}

BlockW make_block(ParamBuilder& b, const std::string& name, int width, int heads, int mlp_dim, real eps)
{
    BlockW w;
    w.ln1 = make_layer_norm(b, name + ".ln_1", width, eps);
    w.attn.qkv = make_linear(b, name + ".attn.qkv", width, 3 * width, true);
    w.attn.proj = make_linear(b, name + ".attn.proj", width, width, true);
    w.attn.heads = heads;
    w.ln2 = make_layer_norm(b, name + ".ln_2", width, eps);
    w.mlp.fc1 = make_linear(b, name + ".mlp.fc1", width, mlp_dim, true);
    w.mlp.fc2 = make_linear(b, name + ".mlp.fc2", mlp_dim, width, true);
    return w;
}

Var apply(Graph& g, const ParameterStore& s, const LinearW& w, Var x)
{
    Var bias = w.bias >= 0 ? g.param(s, w.bias) : Var{};
    return ops::linear(x, g.param(s, w.weight), bias);
}

Var apply(Graph& g, const ParameterStore& s, const LayerNormW& w, Var x)
{
    return ops::layer_norm(x, g.param(s, w.gamma), g.param(s, w.beta), w.eps);
}

Var self_attention(Graph& g, const ParameterStore& s, const AttentionW& w, Var x)
{
    Var qkv = apply(g, s, w.qkv, x);
    const int d = x.cols();
    Var a = ops::attention(ops::slice_cols(qkv, 0, d), ops::slice_cols(qkv, d, d), ops::slice_cols(qkv, 2 * d, d), w.heads);
    return apply(g, s, w.proj, a);
}

Var mlp_gelu(Graph& g, const ParameterStore& s, const MlpW& w, Var x)
{
    return apply(g, s, w.fc2, ops::gelu(apply(g, s, w.fc1, x)));
}

}  // namespace cgsam
