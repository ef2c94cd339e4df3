#pragma once

// Tape-based reverse-mode differentiation over Matrix values.
//
// A Graph records one forward pass. Parameter leaves reference the values in
// a ParameterStore (no copy); their gradients are collected into a GradStore
// after backward(), so several graphs can run against the same read-only
// parameters and be reduced afterwards in a fixed order.

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "cgsam/tensor.hpp"

namespace cgsam {

class ParameterStore;
class Graph;

/// Which parameter leaves receive gradients.
enum class GradMode {
    none,       // inference: nothing is recorded for backward
    trainable,  // parameters flagged trainable in the store
    all,        // every parameter (used to prove a gradient is exactly zero)
};

/// Per-parameter gradient accumulator, indexed like the ParameterStore.
/// Entries stay empty until some graph writes to them.
struct GradStore {
    std::vector<Matrix> grads;

    explicit GradStore(std::size_t n = 0) : grads(n) {}
    void add(int index, const Matrix& g);
    void add(const GradStore& other);
    void scale(real factor);
    void clear();
    /// Squared L2 norm over the given parameter indices.
    real squared_norm(const std::vector<int>& indices) const;
};

class Var {
public:
    Var() = default;
    Var(Graph* g, int id) : graph_(g), id_(id) {}

    bool valid() const { return graph_ != nullptr && id_ >= 0; }
    const Matrix& value() const;
    int rows() const { return value().rows; }
    int cols() const { return value().cols; }
    bool requires_grad() const;
    /// Gradient after Graph::backward, or nullptr when none reached this node.
    const Matrix* grad() const;
    Graph* graph() const { return graph_; }
    int id() const { return id_; }

private:
    Graph* graph_ = nullptr;
    int id_ = -1;
};

class Graph {
public:
    using Backward = std::function<void(Graph&, int self)>;

    explicit Graph(GradMode mode = GradMode::none) : mode_(mode) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    GradMode mode() const { return mode_; }

    Var constant(Matrix value);
    /// Free leaf that always requires grad (gradient checks, tests).
    Var variable(Matrix value);
    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    Var param(const ParameterStore& store, int index);

    /// Records an op result. fn is dropped when no parent requires grad.
    Var record(Matrix value, std::initializer_list<Var> parents, Backward fn);
    Var record(Matrix value, const std::vector<Var>& parents, Backward fn);

    const Matrix& value(int id) const;
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }
    /// Lazily zero-initialized gradient buffer, nullptr if the node needs none.
    Matrix* grad_buffer(int id);
    const Matrix* grad(int id) const;

    /// Reverse sweep from a scalar (1x1) root.
    void backward(Var root);
    /// Adds gradients of parameter leaves into out (which must match the store size).
    void accumulate_param_grads(GradStore& out) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Matrix own;
        const Matrix* ref = nullptr;
        Matrix grad;
        bool requires_grad = false;
        bool has_grad = false;
        int param_index = -1;
        Backward backward;
        const Matrix& value() const { return ref != nullptr ? *ref : own; }
    };

    int push(Node node);

    GradMode mode_;
    std::deque<Node> nodes_;
    std::vector<int> param_nodes_;
    const ParameterStore* store_ = nullptr;
};

namespace ops {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
/// x * w (+ bias row). w is (in x out).
Var linear(Var x, Var w, Var bias = {});
Var add(Var a, Var b);
/// a + row broadcast over rows; row is 1 x cols.
Var add_row(Var a, Var row);
/// a + column broadcast over columns; col is rows x 1.
Var add_col(Var a, Var col);
Var scale(Var a, real factor);
/// a * s where s is a 1x1 Var.
Var mul_scalar(Var a, Var s);
Var gelu(Var a);
Var relu(Var a);
Var layer_norm(Var x, Var gamma, Var beta, real eps);
/// Multi-head scaled dot-product attention. q: Tq x D, k/v: Tk x D.
Var attention(Var q, Var k, Var v, int heads);
Var slice_rows(Var a, int start, int count);
Var slice_cols(Var a, int start, int count);
Var concat_rows(const std::vector<Var>& parts);
/// Repeats a 1 x C row n times.
Var repeat_row(Var row, int n);
Var bilinear_resize(Var x, GridSize in, GridSize out);
/// Non-overlapping p x p patches: (H*W) x C -> (H/p*W/p) x (p*p*C), ordered (dy, dx, c).
Var patchify(Var x, GridSize grid, int patch);
/// Inverse layout of a 2x2 transposed convolution: (H*W) x 4C -> (2H*2W) x C.
Var pixel_shuffle2(Var x, GridSize grid);
/// 3x3 neighbourhoods with zero padding: (H*W) x C -> (H*W) x 9C.
Var im2col3x3(Var x, GridSize grid);
/// Cosine similarity of every row of v with the single row t (norms guarded by eps).
Var cosine_rows(Var v, Var t, real eps);
Var sum(Var a);
/// sum(a .* w) for a constant weight matrix of the same shape.
Var weighted_sum(Var a, const Matrix& w);

}  // namespace ops

}  // namespace cgsam
