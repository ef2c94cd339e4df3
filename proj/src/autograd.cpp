#include "cgsam/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "cgsam/kernels.hpp"
#include "cgsam/params.hpp"

namespace cgsam {

// ---------------------------------------------------------------------------
// GradStore
// ---------------------------------------------------------------------------

void GradStore::add(int index, const Matrix& g)
{
    Matrix& dst = grads.at(index);
    if (dst.empty()) {
        dst = g;
        return;
    }
    if (!dst.same_shape(g)) throw InternalError("GradStore::add: shape mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) dst.data[i] += g.data[i];
}

void GradStore::add(const GradStore& other)
{
    if (grads.size() != other.grads.size()) throw InternalError("GradStore::add: size mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!other.grads[i].empty()) add(static_cast<int>(i), other.grads[i]);
}

void GradStore::scale(real factor)
{
    for (auto& g : grads)
        for (auto& v : g.data) v *= factor;
}

void GradStore::clear()
{
    for (auto& g : grads) g = Matrix();
}

real GradStore::squared_norm(const std::vector<int>& indices) const
{
    real s = 0;
    for (int i : indices)
        for (real v : grads.at(i).data) s += v * v;
    return s;
}

// ---------------------------------------------------------------------------
// Var / Graph
// ---------------------------------------------------------------------------

const Matrix& Var::value() const { return graph_->value(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }
const Matrix* Var::grad() const { return graph_->grad(id_); }

int Graph::push(Node node)
{
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

Var Graph::constant(Matrix value)
{
    Node n;
    n.own = std::move(value);
    return Var(this, push(std::move(n)));
}

Var Graph::variable(Matrix value)
{
    Node n;
    n.own = std::move(value);
    n.requires_grad = true;
    return Var(this, push(std::move(n)));
}

Var Graph::param(const ParameterStore& store, int index)
{
    if (store_ != nullptr && store_ != &store) throw InternalError("Graph::param: graph bound to another store");
    if (index < 0 || index >= store.size()) throw InternalError("Graph::param: bad index");
    if (store_ == nullptr) {
        store_ = &store;
        param_nodes_.assign(store.size(), -1);
    }
    if (param_nodes_[index] >= 0) return Var(this, param_nodes_[index]);
    Node n;
    n.ref = &store[index].value;
    n.param_index = index;
    n.requires_grad = mode_ == GradMode::all || (mode_ == GradMode::trainable && store[index].trainable);
    const int id = push(std::move(n));
    param_nodes_[index] = id;
    return Var(this, id);
}

Var Graph::record(Matrix value, std::initializer_list<Var> parents, Backward fn)
{
    Node n;
    n.own = std::move(value);
    if (mode_ != GradMode::none) {
        for (const Var& p : parents)
            if (p.valid() && p.requires_grad()) n.requires_grad = true;
        if (n.requires_grad) n.backward = std::move(fn);
    }
    return Var(this, push(std::move(n)));
}

Var Graph::record(Matrix value, const std::vector<Var>& parents, Backward fn)
{
    Node n;
    n.own = std::move(value);
    if (mode_ != GradMode::none) {
        for (const Var& p : parents)
            if (p.valid() && p.requires_grad()) n.requires_grad = true;
        if (n.requires_grad) n.backward = std::move(fn);
    }
    return Var(this, push(std::move(n)));
}

const Matrix& Graph::value(int id) const { return nodes_.at(id).value(); }

Matrix* Graph::grad_buffer(int id)
{
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
        const Matrix& v = n.value();
        n.grad = Matrix(v.rows, v.cols);
        n.has_grad = true;
    }
    return &n.grad;
}

const Matrix* Graph::grad(int id) const
{
    const Node& n = nodes_.at(id);
    return n.has_grad ? &n.grad : nullptr;
}

void Graph::backward(Var root)
{
    if (root.graph() != this) throw InternalError("Graph::backward: foreign root");
    const Matrix& rv = value(root.id());
    if (rv.rows != 1 || rv.cols != 1) throw InternalError("Graph::backward: root must be 1x1");
    Matrix* g = grad_buffer(root.id());
    if (g == nullptr) return;
    g->data[0] += 1.0;
    for (int id = root.id(); id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.has_grad || !n.backward) continue;
        n.backward(*this, id);
    }
}

void Graph::accumulate_param_grads(GradStore& out) const
{
    for (const Node& n : nodes_)
        if (n.param_index >= 0 && n.has_grad) out.add(n.param_index, n.grad);
}

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

namespace ops {

namespace {

Graph& graph_of(Var a)
{
    if (!a.valid()) throw InternalError("op on an invalid Var");
    return *a.graph();
}

void check_same_graph(Var a, Var b)
{
    if (a.graph() != b.graph()) throw InternalError("ops: operands from different graphs");
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b)
{
    throw InternalError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void axpy(Matrix& dst, const Matrix& src)
{
    for (std::size_t i = 0; i < src.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

Var matmul(Var a, Var b)
{
    check_same_graph(a, b);
    Graph& g = graph_of(a);
    const Matrix& A = a.value();
    const Matrix& B = b.value();
    if (A.cols != B.rows) shape_error("matmul", A, B);
    Matrix out(A.rows, B.cols);
    kernels::gemm_nn(A.data, B.data, out.data, A.rows, A.cols, B.cols, false);
    const int ia = a.id(), ib = b.id();
    return g.record(std::move(out), {a, b}, [ia, ib](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        const Matrix& A = g.value(ia);
        const Matrix& B = g.value(ib);
        if (Matrix* da = g.grad_buffer(ia)) kernels::gemm_nt(dy.data, B.data, da->data, A.rows, B.cols, B.rows, true);
        if (Matrix* db = g.grad_buffer(ib)) kernels::gemm_tn(A.data, dy.data, db->data, B.rows, A.rows, B.cols, true);
    });
}

Var matmul_nt(Var a, Var b)
{
    check_same_graph(a, b);
    Graph& g = graph_of(a);
    const Matrix& A = a.value();
    const Matrix& B = b.value();
    if (A.cols != B.cols) shape_error("matmul_nt", A, B);
    Matrix out(A.rows, B.rows);
    kernels::gemm_nt(A.data, B.data, out.data, A.rows, A.cols, B.rows, false);
    const int ia = a.id(), ib = b.id();
    return g.record(std::move(out), {a, b}, [ia, ib](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);  // A.rows x B.rows
        const Matrix& A = g.value(ia);
        const Matrix& B = g.value(ib);
        if (Matrix* da = g.grad_buffer(ia)) kernels::gemm_nn(dy.data, B.data, da->data, A.rows, B.rows, A.cols, true);
        if (Matrix* db = g.grad_buffer(ib)) kernels::gemm_tn(dy.data, A.data, db->data, B.rows, A.rows, A.cols, true);
    });
}

Var linear(Var x, Var w, Var bias)
{
    check_same_graph(x, w);
    Graph& g = graph_of(x);
    const Matrix& X = x.value();
    const Matrix& W = w.value();
    if (X.cols != W.rows) shape_error("linear", X, W);
    Matrix out(X.rows, W.cols);
    kernels::gemm_nn(X.data, W.data, out.data, X.rows, X.cols, W.cols, false);
    if (bias.valid()) {
        const Matrix& b = bias.value();
        if (b.rows != 1 || b.cols != W.cols) shape_error("linear(bias)", W, b);
        for (int r = 0; r < out.rows; ++r) {
            auto row = out.row(r);
            for (int c = 0; c < out.cols; ++c) row[c] += b.data[c];
        }
    }
    const int ix = x.id(), iw = w.id(), ib = bias.valid() ? bias.id() : -1;
    return g.record(std::move(out), {x, w, bias}, [ix, iw, ib](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        const Matrix& X = g.value(ix);
        const Matrix& W = g.value(iw);
        if (Matrix* dx = g.grad_buffer(ix)) kernels::gemm_nt(dy.data, W.data, dx->data, X.rows, W.cols, W.rows, true);
        if (Matrix* dw = g.grad_buffer(iw)) kernels::gemm_tn(X.data, dy.data, dw->data, W.rows, X.rows, W.cols, true);
        if (ib >= 0)
            if (Matrix* db = g.grad_buffer(ib))
                for (int r = 0; r < dy.rows; ++r)
                    for (int c = 0; c < dy.cols; ++c) db->data[c] += dy(r, c);
    });
}

Var add(Var a, Var b)
{
    check_same_graph(a, b);
    Graph& g = graph_of(a);
    const Matrix& A = a.value();
    const Matrix& B = b.value();
    if (!A.same_shape(B)) shape_error("add", A, B);
    Matrix out = A;
    axpy(out, B);
    const int ia = a.id(), ib = b.id();
    return g.record(std::move(out), {a, b}, [ia, ib](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        if (Matrix* da = g.grad_buffer(ia)) axpy(*da, dy);
        if (Matrix* db = g.grad_buffer(ib)) axpy(*db, dy);
    });
}

Var add_row(Var a, Var row)
{
    check_same_graph(a, row);
    Graph& g = graph_of(a);
    const Matrix& A = a.value();
    const Matrix& R = row.value();
    if (R.rows != 1 || R.cols != A.cols) shape_error("add_row", A, R);
    Matrix out = A;
    for (int r = 0; r < out.rows; ++r) {
        auto o = out.row(r);
        for (int c = 0; c < out.cols; ++c) o[c] += R.data[c];
    }
    const int ia = a.id(), ir = row.id();
    return g.record(std::move(out), {a, row}, [ia, ir](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        if (Matrix* da = g.grad_buffer(ia)) axpy(*da, dy);
        if (Matrix* dr = g.grad_buffer(ir))
            for (int r = 0; r < dy.rows; ++r)
                for (int c = 0; c < dy.cols; ++c) dr->data[c] += dy(r, c);
    });
}

Var add_col(Var a, Var col)
{
    check_same_graph(a, col);
    Graph& g = graph_of(a);
    const Matrix& A = a.value();
    const Matrix& C = col.value();
    if (C.cols != 1 || C.rows != A.rows) shape_error("add_col", A, C);
    Matrix out = A;
    for (int r = 0; r < out.rows; ++r) {
        auto o = out.row(r);
        for (int c = 0; c < out.cols; ++c) o[c] += C.data[r];
    }
    const int ia = a.id(), ic = col.id();
    return g.record(std::move(out), {a, col}, [ia, ic](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        if (Matrix* da = g.grad_buffer(ia)) axpy(*da, dy);
        if (Matrix* dc = g.grad_buffer(ic))
            for (int r = 0; r < dy.rows; ++r) {
                real s = 0;
                for (int c = 0; c < dy.cols; ++c) s += dy(r, c);
                dc->data[r] += s;
            }
    });
}

Var scale(Var a, real factor)
{
    Graph& g = graph_of(a);
    Matrix out = a.value();
    for (auto& v : out.data) v *= factor;
    const int ia = a.id();
    return g.record(std::move(out), {a}, [ia, factor](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        if (Matrix* da = g.grad_buffer(ia))
            for (std::size_t i = 0; i < dy.size(); ++i) da->data[i] += factor * dy.data[i];
    });
}

Var mul_scalar(Var a, Var s)
{
    check_same_graph(a, s);
    Graph& g = graph_of(a);
    const Matrix& S = s.value();
    if (S.rows != 1 || S.cols != 1) shape_error("mul_scalar", a.value(), S);
    const real k = S.data[0];
    Matrix out = a.value();
    for (auto& v : out.data) v *= k;
    const int ia = a.id(), is = s.id();
    return g.record(std::move(out), {a, s}, [ia, is](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        const Matrix& A = g.value(ia);
        const real k = g.value(is).data[0];
        if (Matrix* da = g.grad_buffer(ia))
            for (std::size_t i = 0; i < dy.size(); ++i) da->data[i] += k * dy.data[i];
        if (Matrix* ds = g.grad_buffer(is)) {
            real acc = 0;
            for (std::size_t i = 0; i < dy.size(); ++i) acc += A.data[i] * dy.data[i];
            ds->data[0] += acc;
        }
    });
}

Var gelu(Var a)
{
    Graph& g = graph_of(a);
    const Matrix& A = a.value();
    Matrix out(A.rows, A.cols);
    kernels::gelu(A.data, out.data);
    const int ia = a.id();
    return g.record(std::move(out), {a}, [ia](Graph& g, int self) {
        if (Matrix* da = g.grad_buffer(ia)) kernels::gelu_backward(g.value(ia).data, g.grad(self)->data, da->data);
    });
}

Var relu(Var a)
{
    Graph& g = graph_of(a);
    Matrix out = a.value();
    for (auto& v : out.data) v = v > 0 ? v : 0.0;
    const int ia = a.id();
    return g.record(std::move(out), {a}, [ia](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        const Matrix& A = g.value(ia);
        if (Matrix* da = g.grad_buffer(ia))
            for (std::size_t i = 0; i < dy.size(); ++i)
                if (A.data[i] > 0) da->data[i] += dy.data[i];
    });
}

Var layer_norm(Var x, Var gamma, Var beta, real eps)
{
    Graph& g = graph_of(x);
    const Matrix& X = x.value();
    const Matrix& G = gamma.value();
    const Matrix& B = beta.value();
    if (G.size() != static_cast<std::size_t>(X.cols) || B.size() != static_cast<std::size_t>(X.cols))
        shape_error("layer_norm", X, G);
    Matrix out(X.rows, X.cols);
    auto stats = std::make_shared<std::pair<std::vector<real>, std::vector<real>>>(std::vector<real>(X.rows),
                                                                                   std::vector<real>(X.rows));
    kernels::layer_norm(X.data, G.data, B.data, out.data, stats->first, stats->second, X.rows, X.cols, eps);
    const int ix = x.id(), ig = gamma.id(), ib = beta.id();
    return g.record(std::move(out), {x, gamma, beta}, [ix, ig, ib, stats](Graph& g, int self) {
        const Matrix& X = g.value(ix);
        const Matrix& G = g.value(ig);
        Matrix* dx = g.grad_buffer(ix);
        Matrix* dg = g.grad_buffer(ig);
        Matrix* db = g.grad_buffer(ib);
        kernels::layer_norm_backward(X.data, G.data, stats->first, stats->second, g.grad(self)->data,
                                     dx ? std::span<real>(dx->data) : std::span<real>(),
                                     dg ? std::span<real>(dg->data) : std::span<real>(),
                                     db ? std::span<real>(db->data) : std::span<real>(), X.rows, X.cols);
    });
}

namespace {

void copy_head(const Matrix& src, int head_offset, int head_dim, std::vector<real>& dst)
{
    dst.resize(static_cast<std::size_t>(src.rows) * head_dim);
    for (int r = 0; r < src.rows; ++r)
        std::copy_n(&src.data[static_cast<std::size_t>(r) * src.cols + head_offset], head_dim,
                    &dst[static_cast<std::size_t>(r) * head_dim]);
}

void add_head(Matrix& dst, int head_offset, int head_dim, const std::vector<real>& src)
{
    for (int r = 0; r < dst.rows; ++r) {
        real* d = &dst.data[static_cast<std::size_t>(r) * dst.cols + head_offset];
        const real* s = &src[static_cast<std::size_t>(r) * head_dim];
        for (int c = 0; c < head_dim; ++c) d[c] += s[c];
    }
}

}  // namespace

Var attention(Var q, Var k, Var v, int heads)
{
    check_same_graph(q, k);
    check_same_graph(q, v);
    Graph& g = graph_of(q);
    const Matrix& Q = q.value();
    const Matrix& K = k.value();
    const Matrix& V = v.value();
    if (Q.cols != K.cols || K.rows != V.rows || V.cols != Q.cols) shape_error("attention", Q, K);
    if (heads <= 0 || Q.cols % heads != 0) throw InternalError("attention: width not divisible by heads");
    const int tq = Q.rows, tk = K.rows, d = Q.cols / heads;
    const real scale = 1.0 / std::sqrt(static_cast<real>(d));

    auto probs = std::make_shared<std::vector<std::vector<real>>>(heads);
    Matrix out(tq, Q.cols);
    std::vector<real> qh, kh, vh, oh(static_cast<std::size_t>(tq) * d);
    for (int h = 0; h < heads; ++h) {
        copy_head(Q, h * d, d, qh);
        copy_head(K, h * d, d, kh);
        copy_head(V, h * d, d, vh);
        auto& p = (*probs)[h];
        p.resize(static_cast<std::size_t>(tq) * tk);
        kernels::gemm_nt(qh, kh, p, tq, d, tk, false);
        for (auto& x : p) x *= scale;
        kernels::softmax_rows(p, tq, tk);
        kernels::gemm_nn(p, vh, oh, tq, tk, d, false);
        for (int r = 0; r < tq; ++r)
            std::copy_n(&oh[static_cast<std::size_t>(r) * d], d, &out.data[static_cast<std::size_t>(r) * Q.cols + h * d]);
    }
    const int iq = q.id(), ik = k.id(), iv = v.id();
    return g.record(std::move(out), {q, k, v}, [iq, ik, iv, heads, probs, scale](Graph& g, int self) {
        const Matrix& Q = g.value(iq);
        const Matrix& K = g.value(ik);
        const Matrix& V = g.value(iv);
        const Matrix& dy = *g.grad(self);
        Matrix* dq = g.grad_buffer(iq);
        Matrix* dk = g.grad_buffer(ik);
        Matrix* dv = g.grad_buffer(iv);
        const int tq = Q.rows, tk = K.rows, d = Q.cols / heads;
        std::vector<real> qh, kh, vh, doh, dp(static_cast<std::size_t>(tq) * tk), ds(dp.size());
        std::vector<real> dqh(static_cast<std::size_t>(tq) * d), dkh(static_cast<std::size_t>(tk) * d),
            dvh(static_cast<std::size_t>(tk) * d);
        for (int h = 0; h < heads; ++h) {
            const auto& p = (*probs)[h];
            copy_head(dy, h * d, d, doh);
            copy_head(V, h * d, d, vh);
            if (dv) {
                kernels::gemm_tn(p, doh, dvh, tk, tq, d, false);
                add_head(*dv, h * d, d, dvh);
            }
            if (!dq && !dk) continue;
            kernels::gemm_nt(doh, vh, dp, tq, d, tk, false);
            std::fill(ds.begin(), ds.end(), 0.0);
            kernels::softmax_rows_backward(p, dp, ds, tq, tk);
            for (auto& x : ds) x *= scale;
            if (dq) {
                copy_head(K, h * d, d, kh);
                kernels::gemm_nn(ds, kh, dqh, tq, tk, d, false);
                add_head(*dq, h * d, d, dqh);
            }
            if (dk) {
                copy_head(Q, h * d, d, qh);
                kernels::gemm_tn(ds, qh, dkh, tk, tq, d, false);
                add_head(*dk, h * d, d, dkh);
            }
        }
    });
}

Var slice_rows(Var a, int start, int count)
{
    Graph& g = graph_of(a);
    const Matrix& A = a.value();
    if (start < 0 || count < 0 || start + count > A.rows) throw InternalError("slice_rows: out of range");
    Matrix out(count, A.cols);
    std::copy_n(A.data.begin() + static_cast<std::ptrdiff_t>(start) * A.cols, static_cast<std::size_t>(count) * A.cols,
                out.data.begin());
    const int ia = a.id();
    return g.record(std::move(out), {a}, [ia, start](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        if (Matrix* da = g.grad_buffer(ia))
            for (std::size_t i = 0; i < dy.size(); ++i) da->data[static_cast<std::size_t>(start) * da->cols + i] += dy.data[i];
    });
}

Var slice_cols(Var a, int start, int count)
{
    Graph& g = graph_of(a);
    const Matrix& A = a.value();
    if (start < 0 || count < 0 || start + count > A.cols) throw InternalError("slice_cols: out of range");
    Matrix out(A.rows, count);
    for (int r = 0; r < A.rows; ++r) std::copy_n(A.ptr(r, start), count, out.ptr(r, 0));
    const int ia = a.id();
    return g.record(std::move(out), {a}, [ia, start](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        if (Matrix* da = g.grad_buffer(ia))
            for (int r = 0; r < dy.rows; ++r)
                for (int c = 0; c < dy.cols; ++c) (*da)(r, start + c) += dy(r, c);
    });
}

Var concat_rows(const std::vector<Var>& parts)
{
    if (parts.empty()) throw InternalError("concat_rows: no inputs");
    Graph& g = graph_of(parts.front());
    const int cols = parts.front().cols();
    int rows = 0;
    for (const Var& p : parts) {
        check_same_graph(parts.front(), p);
        if (p.cols() != cols) shape_error("concat_rows", parts.front().value(), p.value());
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::size_t off = 0;
    std::vector<int> ids;
    for (const Var& p : parts) {
        std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
        off += p.value().size();
        ids.push_back(p.id());
    }
    return g.record(std::move(out), parts, [ids](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        std::size_t off = 0;
        for (int id : ids) {
            const std::size_t n = g.value(id).size();
            if (Matrix* d = g.grad_buffer(id))
                for (std::size_t i = 0; i < n; ++i) d->data[i] += dy.data[off + i];
            off += n;
        }
    });
}

Var repeat_row(Var row, int n)
{
    Graph& g = graph_of(row);
    const Matrix& R = row.value();
    if (R.rows != 1) throw InternalError("repeat_row: expected a single row");
    Matrix out(n, R.cols);
    for (int r = 0; r < n; ++r) std::copy(R.data.begin(), R.data.end(), out.row(r).begin());
    const int ir = row.id();
    return g.record(std::move(out), {row}, [ir](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        if (Matrix* dr = g.grad_buffer(ir))
            for (int r = 0; r < dy.rows; ++r)
                for (int c = 0; c < dy.cols; ++c) dr->data[c] += dy(r, c);
    });
}

Var bilinear_resize(Var x, GridSize in, GridSize out_size)
{
    Graph& g = graph_of(x);
    const Matrix& X = x.value();
    if (X.rows != in.count()) throw InternalError("bilinear_resize: rows do not match the input grid");
    if (in == out_size) return x;
    Matrix out(out_size.count(), X.cols);
    kernels::bilinear_resize(X.data, out.data, X.cols, in.height, in.width, out_size.height, out_size.width);
    const int ix = x.id();
    return g.record(std::move(out), {x}, [ix, in, out_size](Graph& g, int self) {
        if (Matrix* dx = g.grad_buffer(ix))
            kernels::bilinear_resize_backward(g.grad(self)->data, dx->data, dx->cols, in.height, in.width,
                                              out_size.height, out_size.width);
    });
}

Var patchify(Var x, GridSize grid, int patch)
{
    Graph& g = graph_of(x);
    const Matrix& X = x.value();
    if (X.rows != grid.count() || grid.height % patch != 0 || grid.width % patch != 0)
        throw InternalError("patchify: grid not divisible by patch");
    const int gh = grid.height / patch, gw = grid.width / patch, c = X.cols;
    Matrix out(gh * gw, patch * patch * c);
    auto map = [=](int py, int px, int dy, int dx) {
        return std::pair<std::size_t, std::size_t>(
            static_cast<std::size_t>((py * patch + dy) * grid.width + px * patch + dx) * c,
            static_cast<std::size_t>(py * gw + px) * patch * patch * c + static_cast<std::size_t>(dy * patch + dx) * c);
    };
    for (int py = 0; py < gh; ++py)
        for (int px = 0; px < gw; ++px)
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx) {
                    auto [src, dst] = map(py, px, dy, dx);
                    std::copy_n(&X.data[src], c, &out.data[dst]);
                }
    const int ix = x.id();
    return g.record(std::move(out), {x}, [ix, gh, gw, patch, c, map](Graph& g, int self) {
        const Matrix& dy_ = *g.grad(self);
        if (Matrix* dx_ = g.grad_buffer(ix))
            for (int py = 0; py < gh; ++py)
                for (int px = 0; px < gw; ++px)
                    for (int dy = 0; dy < patch; ++dy)
                        for (int dx = 0; dx < patch; ++dx) {
                            auto [src, dst] = map(py, px, dy, dx);
                            for (int k = 0; k < c; ++k) dx_->data[src + k] += dy_.data[dst + k];
                        }
    });
}

Var pixel_shuffle2(Var x, GridSize grid)
{
    Graph& g = graph_of(x);
    const Matrix& X = x.value();
    if (X.rows != grid.count() || X.cols % 4 != 0) throw InternalError("pixel_shuffle2: bad input shape");
    const int c = X.cols / 4, ow = grid.width * 2;
    Matrix out(grid.count() * 4, c);
    for (int y = 0; y < grid.height; ++y)
        for (int x0 = 0; x0 < grid.width; ++x0)
            for (int q = 0; q < 4; ++q) {
                const int oy = 2 * y + q / 2, ox = 2 * x0 + q % 2;
                std::copy_n(X.ptr(y * grid.width + x0, q * c), c, out.ptr(oy * ow + ox, 0));
            }
    const int ix = x.id();
    return g.record(std::move(out), {x}, [ix, grid, c, ow](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        if (Matrix* dx = g.grad_buffer(ix))
            for (int y = 0; y < grid.height; ++y)
                for (int x0 = 0; x0 < grid.width; ++x0)
                    for (int q = 0; q < 4; ++q) {
                        const int oy = 2 * y + q / 2, ox = 2 * x0 + q % 2;
                        for (int k = 0; k < c; ++k) (*dx)(y * grid.width + x0, q * c + k) += dy(oy * ow + ox, k);
                    }
    });
}

Var im2col3x3(Var x, GridSize grid)
{
    Graph& g = graph_of(x);
    const Matrix& X = x.value();
    if (X.rows != grid.count()) throw InternalError("im2col3x3: rows do not match grid");
    const int c = X.cols;
    Matrix out(grid.count(), 9 * c);
    for (int y = 0; y < grid.height; ++y)
        for (int x0 = 0; x0 < grid.width; ++x0)
            for (int t = 0; t < 9; ++t) {
                const int sy = y + t / 3 - 1, sx = x0 + t % 3 - 1;
                if (sy < 0 || sx < 0 || sy >= grid.height || sx >= grid.width) continue;
                std::copy_n(X.ptr(sy * grid.width + sx, 0), c, out.ptr(y * grid.width + x0, t * c));
            }
    const int ix = x.id();
    return g.record(std::move(out), {x}, [ix, grid, c](Graph& g, int self) {
        const Matrix& dy = *g.grad(self);
        if (Matrix* dx = g.grad_buffer(ix))
            for (int y = 0; y < grid.height; ++y)
                for (int x0 = 0; x0 < grid.width; ++x0)
                    for (int t = 0; t < 9; ++t) {
                        const int sy = y + t / 3 - 1, sx = x0 + t % 3 - 1;
                        if (sy < 0 || sx < 0 || sy >= grid.height || sx >= grid.width) continue;
                        for (int k = 0; k < c; ++k) (*dx)(sy * grid.width + sx, k) += dy(y * grid.width + x0, t * c + k);
                    }
    });
}

Var cosine_rows(Var v, Var t, real eps)
{
    check_same_graph(v, t);
    Graph& g = graph_of(v);
    const Matrix& V = v.value();
    const Matrix& T = t.value();
    if (T.rows != 1 || T.cols != V.cols) shape_error("cosine_rows", V, T);
    // Norms are floored at eps rather than shifted by it, so scaling either
    // argument leaves the result exactly unchanged.
    real tn2 = 0;
    for (real x : T.data) tn2 += x * x;
    const real traw = std::sqrt(tn2);
    const real tnorm = std::max(traw, eps);
    auto vraw = std::make_shared<std::vector<real>>(V.rows);
    Matrix out(V.rows, 1);
    for (int r = 0; r < V.rows; ++r) {
        auto row = V.row(r);
        real n2 = 0, dot = 0;
        for (int c = 0; c < V.cols; ++c) {
            n2 += row[c] * row[c];
            dot += row[c] * T.data[c];
        }
        (*vraw)[r] = std::sqrt(n2);
        out.data[r] = dot / (std::max((*vraw)[r], eps) * tnorm);
    }
    const int iv = v.id(), it = t.id();
    return g.record(std::move(out), {v, t}, [iv, it, vraw, traw, tnorm, eps](Graph& g, int self) {
        const Matrix& V = g.value(iv);
        const Matrix& T = g.value(it);
        const Matrix& S = g.value(self);
        const Matrix& dy = *g.grad(self);
        Matrix* dv = g.grad_buffer(iv);
        Matrix* dt = g.grad_buffer(it);
        for (int r = 0; r < V.rows; ++r) {
            const real raw = (*vraw)[r];
            const real nv = std::max(raw, eps);
            const real gr = dy.data[r];
            if (gr == 0.0) continue;
            // s = <v,t> / (nv * nt) with nv = max(|v|, eps), nt = max(|t|, eps)
            for (int c = 0; c < V.cols; ++c) {
                const real vc = V(r, c), tc = T.data[c];
                if (dv) {
                    const real dnorm = raw > eps ? vc / raw : 0.0;
                    (*dv)(r, c) += gr * (tc / (nv * tnorm) - S.data[r] * dnorm / nv);
                }
                if (dt) {
                    const real dnorm = traw > eps ? tc / traw : 0.0;
                    dt->data[c] += gr * (vc / (nv * tnorm) - S.data[r] * dnorm / tnorm);
                }
            }
        }
    });
}

Var sum(Var a)
{
    Graph& g = graph_of(a);
    real s = 0;
    for (real v : a.value().data) s += v;
    const int ia = a.id();
    return g.record(Matrix(1, 1, s), {a}, [ia](Graph& g, int self) {
        const real dy = g.grad(self)->data[0];
        if (Matrix* da = g.grad_buffer(ia))
            for (auto& v : da->data) v += dy;
    });
}

Var weighted_sum(Var a, const Matrix& w)
{
    Graph& g = graph_of(a);
    if (!a.value().same_shape(w)) shape_error("weighted_sum", a.value(), w);
    real s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) s += a.value().data[i] * w.data[i];
    const int ia = a.id();
    return g.record(Matrix(1, 1, s), {a}, [ia, w](Graph& g, int self) {
        const real dy = g.grad(self)->data[0];
        if (Matrix* da = g.grad_buffer(ia))
            for (std::size_t i = 0; i < w.size(); ++i) da->data[i] += dy * w.data[i];
    });
}

}  // namespace ops

}  // namespace cgsam
