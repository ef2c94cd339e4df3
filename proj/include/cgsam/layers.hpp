#pragma once

// Parameter handles and forward helpers shared by the encoders, adapters and
// the segmentation head. A handle holds store indices (-1 when absent or when
// the model was described in counting mode).

#include <string>

#include "cgsam/autograd.hpp"
#include "cgsam/params.hpp"

namespace cgsam {

struct LinearW {
    int weight = -1;  // in x out
    int bias = -1;
};

struct LayerNormW {
    int gamma = -1;
    int beta = -1;
    real eps = 1e-5;
};

struct AttentionW {
    LinearW qkv;
    LinearW proj;
    int heads = 1;
};

struct MlpW {
    LinearW fc1;
    LinearW fc2;
};

/// Pre-norm transformer block without adapters.
struct BlockW {
    LayerNormW ln1;
    AttentionW attn;
    LayerNormW ln2;
    MlpW mlp;
};

LinearW make_linear(ParamBuilder& b, const std::string& name, int in, int out, bool bias,
                    InitSpec init = InitSpec::trunc_normal());
LayerNormW make_layer_norm(ParamBuilder& b, const std::string& name, int width, real eps);
BlockW make_block(ParamBuilder& b, const std::string& name, int width, int heads, int mlp_dim, real eps);

Var apply(Graph& g, const ParameterStore& s, const LinearW& w, Var x);
Var apply(Graph& g, const ParameterStore& s, const LayerNormW& w, Var x);
/// Fused-qkv self attention followed by the output projection.
Var self_attention(Graph& g, const ParameterStore& s, const AttentionW& w, Var x);
Var mlp_gelu(Graph& g, const ParameterStore& s, const MlpW& w, Var x);

}  // namespace cgsam
