#include <algorithm>

#include "cgsam/conditioning.hpp"

namespace cgsam {

AdapterW make_adapter(ParamBuilder& b, const std::string& name, int width, int ratio)
{
    AdapterW w;
    w.down = make_linear(b, name + ".down", width, width / ratio, true);
    w.up = make_linear(b, name + ".up", width / ratio, width, true);
    w.gate = b.make(name + ".gate", 1, 1, InitSpec::zeros());
    return w;
}

SemanticAdapterW make_semantic_adapter(ParamBuilder& b, const std::string& name, int width, int embed_dim, int ratio)
{
    SemanticAdapterW w;
    w.w_v = b.make(name + ".w_v", embed_dim, width, InitSpec::trunc_normal());
    w.w_t = b.make(name + ".w_t", embed_dim, width, InitSpec::trunc_normal());
    w.bottleneck = make_adapter(b, name, width, ratio);
    return w;
}

Var fuse_vision_similarity(Var v, Var s)
{
    if (v.rows() != s.rows() || s.cols() != 1)
        throw InputError("fuse_vision_similarity: V is " + shape_str(v.value()) + ", s is " + shape_str(s.value()));
    return ops::add_col(v, s);
}

Var project_and_align(Var u, Var w_v, GridSize grid, GridSize target)
{
    if (u.rows() != grid.count()) throw InputError("project_and_align: U rows do not match the grid");
    if (u.cols() != w_v.rows()) throw ConfigError("project_and_align: W_v expects " + std::to_string(w_v.rows()) +
                                                  " channels, got " + std::to_string(u.cols()));
    return ops::bilinear_resize(ops::matmul(u, w_v), grid, target);
}

Var project_text(Var t, Var w_t)
{
    if (t.rows() != 1 || t.cols() != w_t.rows())
        throw ConfigError("project_text: t is " + shape_str(t.value()) + ", W_t is " + shape_str(w_t.value()));
    return ops::gelu(ops::matmul(t, w_t));
}

Var bottleneck(Graph& g, const ParameterStore& s, const AdapterW& w, Var x)
{
    return ops::mul_scalar(apply(g, s, w.up, ops::gelu(apply(g, s, w.down, x))), g.param(s, w.gate));
}

Var semantic_adapter(Graph& g, const ParameterStore& s, const SemanticAdapterW& w, Var features,
                     const SemanticContext& ctx, GridSize target)
{
    if (features.rows() != target.count()) throw InternalError("semantic_adapter: feature rows do not match grid");
    const Modalities& m = ctx.modalities;
    Var fused = features;
    if (m.vision || m.similarity) {
        Var u = ctx.patches;
        if (!m.vision) u = g.constant(Matrix(ctx.scores.rows(), ctx.patches.cols()));
        if (m.similarity) u = fuse_vision_similarity(u, ctx.scores);
        fused = ops::add(fused, project_and_align(u, g.param(s, w.w_v), ctx.grid, target));
    }
    if (m.text) fused = ops::add_row(fused, project_text(ctx.text, g.param(s, w.w_t)));
    return bottleneck(g, s, w.bottleneck, fused);
}

namespace {

struct ConstAdapter {
    Graph g{GradMode::none};
    AdapterW w;
    ParameterStore store;

    explicit ConstAdapter(const AdapterParams& p)
    {
        w.down = {store.add("down.weight", p.down_w), store.add("down.bias", p.down_b)};
        w.up = {store.add("up.weight", p.up_w), store.add("up.bias", p.up_b)};
        w.gate = store.add("gate", Matrix(1, 1, p.gate));
    }
};

}  // namespace

Matrix fuse_vision_similarity(const Matrix& v, const Matrix& s)
{
    Graph g;
    return fuse_vision_similarity(g.constant(v), g.constant(s)).value();
}

Matrix project_and_align(const Matrix& u, const Matrix& w_v, GridSize grid, GridSize target)
{
    Graph g;
    return project_and_align(g.constant(u), g.constant(w_v), grid, target).value();
}

Matrix project_text(const Matrix& t, const Matrix& w_t, GridSize target)
{
    Graph g;
    return ops::repeat_row(project_text(g.constant(t), g.constant(w_t)), target.count()).value();
}

Matrix semantic_adapter_forward(const Matrix& f, const Matrix& u_l, const Matrix& t_l, const AdapterParams& p)
{
    if (!f.same_shape(u_l) || !f.same_shape(t_l))
        throw InternalError("semantic_adapter_forward: F, U_l and T_l must share a shape");
    ConstAdapter a(p);
    Var fused = ops::add(ops::add(a.g.constant(f), a.g.constant(u_l)), a.g.constant(t_l));
    return bottleneck(a.g, a.store, a.w, fused).value();
}

Matrix regular_adapter_forward(const Matrix& f, const AdapterParams& p)
{
    if (f.cols != p.down_w.rows) throw InternalError("regular_adapter_forward: channel mismatch");
    ConstAdapter a(p);
    return bottleneck(a.g, a.store, a.w, a.g.constant(f)).value();
}

bool BudgetPlan::has_semantic(int block) const
{
    return std::binary_search(semantic_adapter_blocks.begin(), semantic_adapter_blocks.end(), block);
}

bool BudgetPlan::has_regular(int block) const
{
    return std::binary_search(regular_adapter_blocks.begin(), regular_adapter_blocks.end(), block);
}

bool BudgetPlan::vision_block_trainable(int block) const
{
    return std::binary_search(trainable_vision_blocks.begin(), trainable_vision_blocks.end(), block);
}

BudgetPlan configure_budget(int C, int S, const EncoderConfig& vision, const EncoderConfig& seg, bool regular_adapters)
{
    if (C < 0 || C > vision.depth)
        throw ConfigError("budget C=" + std::to_string(C) + " outside [0, " + std::to_string(vision.depth) + "]");
    if (S < 0 || S > seg.depth)
        throw ConfigError("budget S=" + std::to_string(S) + " outside [0, " + std::to_string(seg.depth) + "]");
    BudgetPlan p;
    p.C = C;
    p.S = S;
    for (int i = vision.depth - C; i < vision.depth; ++i) p.trainable_vision_blocks.push_back(i);
    for (int i = seg.depth - S; i < seg.depth; ++i) p.semantic_adapter_blocks.push_back(i);
    if (regular_adapters)
        for (int i = 0; i < seg.depth; ++i) p.regular_adapter_blocks.push_back(i);
    return p;
}

}  // namespace cgsam
