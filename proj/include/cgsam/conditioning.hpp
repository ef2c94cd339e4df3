#pragma once

// Semantic adapters (parallel to each MLP of the segmentation encoder) and
// regular adapters (parallel to attention), plus the (C, S) budget plan.
//
// Semantic adapter, for block input features F (N_l x C_l):
//   U    = V + s (s broadcast over channels)
//   U_l  = resize(U W_v, grid -> feature grid)
//   T_l  = tile(GELU(t W_t))
//   F^   = F + U_l + T_l
//   out  = gate * up(GELU(down(F^)))
// Regular adapter: out = gate * up(GELU(down(F))).

#include <string>
#include <vector>

#include "cgsam/autograd.hpp"
#include "cgsam/layers.hpp"
#include "cgsam/model_config.hpp"

namespace cgsam {

struct AdapterW {
    LinearW down;
    LinearW up;
    int gate = -1;  // 1 x 1
};

struct SemanticAdapterW {
    int w_v = -1;  // C_c x C_l
    int w_t = -1;  // C_c x C_l
    AdapterW bottleneck;
};

/// Gate starts at zero so an adapter is an exact no-op until trained; the
/// up-projection gets a small random init so gradients can reach both.
AdapterW make_adapter(ParamBuilder& b, const std::string& name, int width, int ratio);
SemanticAdapterW make_semantic_adapter(ParamBuilder& b, const std::string& name, int width, int embed_dim, int ratio);

/// Semantic signals bound into a graph.
struct SemanticContext {
    Var patches;  // V: N x C_c
    Var scores;   // s: N x 1
    Var text;     // t: 1 x C_c
    GridSize grid;
    Modalities modalities;
};

Var fuse_vision_similarity(Var v, Var s);
Var project_and_align(Var u, Var w_v, GridSize grid, GridSize target);
/// GELU(t W_t) as a single row; callers broadcast it over positions.
Var project_text(Var t, Var w_t);
Var bottleneck(Graph& g, const ParameterStore& s, const AdapterW& w, Var x);
Var semantic_adapter(Graph& g, const ParameterStore& s, const SemanticAdapterW& w, Var features,
                     const SemanticContext& ctx, GridSize target);

// Value-level forms of the same computations.
struct AdapterParams {
    Matrix down_w, down_b, up_w, up_b;
    real gate = 0.0;
};

Matrix fuse_vision_similarity(const Matrix& v, const Matrix& s);
Matrix project_and_align(const Matrix& u, const Matrix& w_v, GridSize grid, GridSize target);
/// Returns the tiled (target.count() x C_l) map.
Matrix project_text(const Matrix& t, const Matrix& w_t, GridSize target);
Matrix semantic_adapter_forward(const Matrix& f, const Matrix& u_l, const Matrix& t_l, const AdapterParams& p);
Matrix regular_adapter_forward(const Matrix& f, const AdapterParams& p);

/// Placement of trainable vision attention blocks and adapters. Block
/// indices are ascending; budgets count from the deepest block.
struct BudgetPlan {
    int C = 0;
    int S = 0;
    std::vector<int> trainable_vision_blocks;
    std::vector<int> semantic_adapter_blocks;
    std::vector<int> regular_adapter_blocks;

    bool has_semantic(int block) const;
    bool has_regular(int block) const;
    bool vision_block_trainable(int block) const;
    friend bool operator==(const BudgetPlan&, const BudgetPlan&) = default;
};

BudgetPlan configure_budget(int C, int S, const EncoderConfig& vision, const EncoderConfig& seg,
                            bool regular_adapters = true);

}  // namespace cgsam
