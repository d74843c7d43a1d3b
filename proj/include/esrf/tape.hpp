#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "esrf/error.hpp"
#include "esrf/fastmath.hpp"
#include "esrf/sparse.hpp"
#include "esrf/tensor.hpp"

namespace esrf {

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

enum class Op : std::uint8_t {
    kLeaf,
    kConstant,
    kAdd,
    kSub,
    kMul,
    kAddRowVec,
    kScale,
    kClampMin,
    kMatMul,
    kTranspose,
    kSigmoid,
    kLogSigmoid,
    kRelu,
    kLog,
    kExp,
    kSoftmaxRows,
    kSum,
    kDot,
    kRowsDot,
    kGatherRows,
    kConcatCols,
    kReshape,
    kSumRows,
    kRowBroadcast,
    kSpmm,
    kWeightedGatherSum,
    kAttnScores,
};

/// Reverse-mode autodiff over an explicitly recorded computation graph.
/// Insertion order is the topological order; values are recorded on the
/// forward pass and never mutated by backward. Leaves accumulate gradients.
///
/// The op set covers what the two networks need: dense/sparse products,
/// row gathers, elementwise maps, row softmax, concatenation, reductions,
/// plus two fused graph kernels (neighbor-weighted sums and the social
/// attention scores) that would otherwise materialize edge-by-edge tensors.
template <typename T>
class Tape {
  public:
    using Tn = Tensor<T>;

    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        int c = -1;
        Tn value;
        double scalar = 0.0;                // Scale factor / ClampMin floor
        const SparseMatrix* sp = nullptr;   // Spmm forward matrix
        const SparseMatrix* spt = nullptr;  // its transpose, for backward
        std::vector<std::int64_t> indices;  // gathers / neighbor lists (owned)
        std::size_t aux_rows = 0, aux_cols = 0;  // reshape / broadcast / neighbor k
    };

    std::size_t size() const { return nodes_.size(); }
    const Tn& value(Var v) const { return nodes_[v.id].value; }
    const Tn& grad(Var v) const { return grads_[v.id]; }

    Var leaf(Tn init) {
        Node n{Op::kLeaf};
        n.value = std::move(init);
        return push(std::move(n));
    }

    Var constant(Tn value) {
        Node n{Op::kConstant};
        n.value = std::move(value);
        return push(std::move(n));
    }

    Var add(Var a, Var b) {
        require_same_shape(a, b, "add");
        Node n{Op::kAdd, a.id, b.id};
        n.value = val(a);
        const Tn& vb = val(b);
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] += vb.data[i];
        return push(std::move(n));
    }

    Var sub(Var a, Var b) {
        require_same_shape(a, b, "sub");
        Node n{Op::kSub, a.id, b.id};
        n.value = val(a);
        const Tn& vb = val(b);
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] -= vb.data[i];
        return push(std::move(n));
    }

    Var mul(Var a, Var b) {
        require_same_shape(a, b, "mul");
        Node n{Op::kMul, a.id, b.id};
        n.value = val(a);
        const Tn& vb = val(b);
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data[i] *= vb.data[i];
        return push(std::move(n));
    }

    /// Adds a 1 x c row vector to every row of an r x c matrix.
    Var add_rowvec(Var a, Var v) {
        if (val(v).rows != 1 || val(v).cols != val(a).cols)
            throw InputError("add_rowvec: shape mismatch");
        Node n{Op::kAddRowVec, a.id, v.id};
        n.value = val(a);
        const Tn& vv = val(v);
        for (std::size_t r = 0; r < n.value.rows; ++r)
            for (std::size_t c = 0; c < n.value.cols; ++c) n.value(r, c) += vv.data[c];
        return push(std::move(n));
    }

    Var scale(Var a, double factor) {
        Node n{Op::kScale, a.id};
        n.scalar = factor;
        n.value = val(a);
        for (auto& x : n.value.data) x = static_cast<T>(x * factor);
        return push(std::move(n));
    }

    Var clamp_min(Var a, double floor) {
        Node n{Op::kClampMin, a.id};
        n.scalar = floor;
        n.value = val(a);
        for (auto& x : n.value.data)
            if (x < static_cast<T>(floor)) x = static_cast<T>(floor);
        return push(std::move(n));
    }

    Var matmul(Var a, Var b) {
        const Tn& va = val(a);
        const Tn& vb = val(b);
        if (va.cols != vb.rows) throw InputError("matmul: dimension mismatch");
        Node n{Op::kMatMul, a.id, b.id};
        n.value = Tn(va.rows, vb.cols);
        matmul_nn(va, vb, n.value);
        return push(std::move(n));
    }

    Var transpose(Var a) {
        const Tn& va = val(a);
        Node n{Op::kTranspose, a.id};
        n.value = Tn(va.cols, va.rows);
        for (std::size_t r = 0; r < va.rows; ++r)
            for (std::size_t c = 0; c < va.cols; ++c) n.value(c, r) = va(r, c);
        return push(std::move(n));
    }

    Var sigmoid(Var a) {
        Node n{Op::kSigmoid, a.id};
        n.value = val(a);
        for (auto& x : n.value.data) x = sigmoid_scalar(x);
        return push(std::move(n));
    }

    /// log(sigmoid(x)), computed without intermediate underflow.
    Var logsigmoid(Var a) {
        Node n{Op::kLogSigmoid, a.id};
        n.value = val(a);
        for (auto& x : n.value.data) {
            double v = static_cast<double>(x);
            x = static_cast<T>(v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v)));
        }
        return push(std::move(n));
    }

    Var relu(Var a) {
        Node n{Op::kRelu, a.id};
        n.value = val(a);
        for (auto& x : n.value.data)
            if (x < T(0)) x = T(0);
        return push(std::move(n));
    }

    Var log(Var a) {
        Node n{Op::kLog, a.id};
        n.value = val(a);
        for (auto& x : n.value.data) x = t_log(x);
        return push(std::move(n));
    }

    Var exp(Var a) {
        Node n{Op::kExp, a.id};
        n.value = val(a);
        for (auto& x : n.value.data) x = t_exp(x);
        return push(std::move(n));
    }

    Var softmax_rows(Var a) {
        Node n{Op::kSoftmaxRows, a.id};
        n.value = val(a);
#pragma omp parallel for schedule(static) if (n.value.rows > 16 && n.value.cols > 256)
        for (std::size_t r = 0; r < n.value.rows; ++r) softmax_row(n.value.row_ptr(r), n.value.cols);
        return push(std::move(n));
    }

    Var sum(Var a) {
        Node n{Op::kSum, a.id};
        double s = 0.0;
        for (T x : val(a).data) s += static_cast<double>(x);
        n.value = Tn::scalar(static_cast<T>(s));
        return push(std::move(n));
    }

    Var dot(Var a, Var b) {
        require_same_shape(a, b, "dot");
        Node n{Op::kDot, a.id, b.id};
        const Tn& va = val(a);
        const Tn& vb = val(b);
        double s = 0.0;
        for (std::size_t i = 0; i < va.size(); ++i)
            s += static_cast<double>(va.data[i]) * static_cast<double>(vb.data[i]);
        n.value = Tn::scalar(static_cast<T>(s));
        return push(std::move(n));
    }

    /// Row-wise dot product of two r x c matrices -> r x 1.
    Var rows_dot(Var a, Var b) {
        require_same_shape(a, b, "rows_dot");
        Node n{Op::kRowsDot, a.id, b.id};
        const Tn& va = val(a);
        const Tn& vb = val(b);
        n.value = Tn(va.rows, 1);
        for (std::size_t r = 0; r < va.rows; ++r) {
            T s = T(0);
            const T* pa = va.row_ptr(r);
            const T* pb = vb.row_ptr(r);
            for (std::size_t c = 0; c < va.cols; ++c) s += pa[c] * pb[c];
            n.value(r, 0) = s;
        }
        return push(std::move(n));
    }

    /// Gathers rows of `a` by index; index -1 yields a zero row.
    Var gather_rows(Var a, const std::vector<std::int64_t>& idx) {
        const Tn& va = val(a);
        Node n{Op::kGatherRows, a.id};
        n.indices = idx;
        n.value = Tn(idx.size(), va.cols);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0) continue;
            if (static_cast<std::size_t>(idx[i]) >= va.rows)
                throw InputError("gather_rows: index out of range");
            const T* src = va.row_ptr(static_cast<std::size_t>(idx[i]));
            std::copy(src, src + va.cols, n.value.row_ptr(i));
        }
        return push(std::move(n));
    }

    Var concat_cols(Var a, Var b) {
        const Tn& va = val(a);
        const Tn& vb = val(b);
        if (va.rows != vb.rows) throw InputError("concat_cols: row mismatch");
        Node n{Op::kConcatCols, a.id, b.id};
        n.value = Tn(va.rows, va.cols + vb.cols);
        for (std::size_t r = 0; r < va.rows; ++r) {
            std::copy(va.row_ptr(r), va.row_ptr(r) + va.cols, n.value.row_ptr(r));
            std::copy(vb.row_ptr(r), vb.row_ptr(r) + vb.cols, n.value.row_ptr(r) + va.cols);
        }
        return push(std::move(n));
    }

    Var reshape(Var a, std::size_t rows, std::size_t cols) {
        const Tn& va = val(a);
        if (rows * cols != va.size()) throw InputError("reshape: element count mismatch");
        Node n{Op::kReshape, a.id};
        n.aux_rows = rows;
        n.aux_cols = cols;
        n.value = va;
        n.value.rows = rows;
        n.value.cols = cols;
        return push(std::move(n));
    }

    /// Column sums: r x c -> 1 x c.
    Var sum_rows(Var a) {
        const Tn& va = val(a);
        Node n{Op::kSumRows, a.id};
        n.value = Tn(1, va.cols);
        for (std::size_t r = 0; r < va.rows; ++r)
            for (std::size_t c = 0; c < va.cols; ++c) n.value.data[c] += va(r, c);
        return push(std::move(n));
    }

    /// Repeats a 1 x c row vector k times -> k x c.
    Var row_broadcast(Var a, std::size_t k) {
        const Tn& va = val(a);
        if (va.rows != 1) throw InputError("row_broadcast: input must be a row vector");
        Node n{Op::kRowBroadcast, a.id};
        n.aux_rows = k;
        n.value = Tn(k, va.cols);
        for (std::size_t r = 0; r < k; ++r)
            std::copy(va.data.begin(), va.data.end(), n.value.row_ptr(r));
        return push(std::move(n));
    }

    /// Sparse-dense product s * x. `st` must be the transpose of `s`; both
    /// must outlive the tape.
    Var spmm(const SparseMatrix& s, const SparseMatrix& st, Var x) {
        const Tn& vx = val(x);
        if (s.n_cols != vx.rows) throw InputError("spmm: dimension mismatch");
        Node n{Op::kSpmm, x.id};
        n.sp = &s;
        n.spt = &st;
        n.value = Tn(s.n_rows, vx.cols);
        spmm_kernel(s, vx, n.value);
        return push(std::move(n));
    }

    /// out(u,:) = sum_j weights(u,j) * x(idx(u,j),:), skipping idx = -1.
    /// `idx` is row-major m x k and must outlive the tape.
    Var weighted_gather_sum(Var weights, Var x, const std::vector<std::int64_t>& idx,
                            std::size_t k) {
        const Tn& vw = val(weights);
        const Tn& vx = val(x);
        if (vw.cols != k || idx.size() != vw.rows * k)
            throw InputError("weighted_gather_sum: index shape mismatch");
        Node n{Op::kWeightedGatherSum, weights.id, x.id};
        n.indices = idx;
        n.aux_cols = k;
        n.value = Tn(vw.rows, vx.cols);
#pragma omp parallel for schedule(static) if (vw.rows > 128)
        for (std::size_t u = 0; u < vw.rows; ++u) {
            T* out = n.value.row_ptr(u);
            for (std::size_t j = 0; j < k; ++j) {
                const std::int64_t v = idx[u * k + j];
                if (v < 0) continue;
                const T w = vw(u, j);
                const T* src = vx.row_ptr(static_cast<std::size_t>(v));
                for (std::size_t c = 0; c < vx.cols; ++c) out[c] += w * src[c];
            }
        }
        return push(std::move(n));
    }

    /// Social attention scores. For each user u and neighbor slot j with
    /// v = idx(u,j) >= 0:
    ///   score(u,j) = sum_t q(t) * sigmoid(p1(u,t) + p1(v,t))
    ///              + sum_t q(d+t) * sigmoid(ctx(u,t))
    /// i.e. q . sigmoid(concat(W1(e_u + e_v), W2 e_i)) with p1 = E W1 and
    /// ctx = (context item embedding) W2 precomputed by the caller. Empty
    /// slots score -1e30 so a following row softmax ignores them. The edge
    /// activations are recomputed in backward rather than stored.
    Var attn_scores(Var p1, Var ctx, Var q, const std::vector<std::int64_t>& idx, std::size_t k) {
        const Tn& vp = val(p1);
        const Tn& vc = val(ctx);
        const Tn& vq = val(q);
        const std::size_t d = vp.cols;
        if (vc.cols != d || vq.size() != 2 * d || vc.rows != vp.rows)
            throw InputError("attn_scores: shape mismatch");
        if (idx.size() != vc.rows * k) throw InputError("attn_scores: index shape mismatch");
        Node n{Op::kAttnScores, p1.id, ctx.id, q.id};
        n.indices = idx;
        n.aux_cols = k;
        n.value = Tn(vc.rows, k);
        const T* qu = vq.data.data();
        const T* qi = vq.data.data() + d;
#pragma omp parallel for schedule(static) if (vc.rows > 128)
        for (std::size_t u = 0; u < vc.rows; ++u) {
            // context part is shared by all of u's slots
            T ctx_part = T(0);
            const T* cu = vc.row_ptr(u);
            for (std::size_t t = 0; t < d; ++t) ctx_part += qi[t] * sigmoid_scalar(cu[t]);
            const T* pu = vp.row_ptr(u);
            for (std::size_t j = 0; j < k; ++j) {
                const std::int64_t v = idx[u * k + j];
                if (v < 0) {
                    n.value(u, j) = T(-1e30);
                    continue;
                }
                const T* pv = vp.row_ptr(static_cast<std::size_t>(v));
                T s = ctx_part;
                for (std::size_t t = 0; t < d; ++t) s += qu[t] * sigmoid_scalar(pu[t] + pv[t]);
                n.value(u, j) = s;
            }
        }
        return push(std::move(n));
    }

    /// Reverse pass from a scalar node. Returns its forward value. Gradients
    /// of all reachable nodes are (re)computed; forward values are untouched.
    T backward(Var loss) {
        const Node& ln = nodes_[loss.id];
        if (ln.value.size() != 1) throw InputError("backward: loss node must be scalar");
        grads_.assign(nodes_.size(), Tn());
        visited_.assign(nodes_.size(), false);
        mark(loss.id);
        ensure_grad(loss.id).data[0] = T(1);
        for (int i = loss.id; i >= 0; --i) {
            if (!visited_[i] || grads_[i].size() == 0) continue;
            backprop_node(i);
        }
        return ln.value.data[0];
    }

    /// Recomputes every non-leaf value in insertion order (used after
    /// perturbing a leaf in finite-difference checks).
    void refresh() {
        for (std::size_t i = 0; i < nodes_.size(); ++i) recompute(static_cast<int>(i));
    }

    /// Central finite differences on one leaf against the recorded gradient.
    /// Returns the worst relative error over the leaf's coordinates. The
    /// denominator is floored at 1e-6 * (1 + |loss|): below that scale the
    /// difference quotient is dominated by cancellation noise, not gradient
    /// information.
    double grad_check(Var loss, Var leaf, double eps) {
        if (eps <= 0.0) throw InputError("grad_check: eps must be positive");
        backward(loss);
        const double f0 = std::abs(static_cast<double>(nodes_[loss.id].value.data[0]));
        const double floor = 1e-6 * (1.0 + f0);
        Tn analytic = grads_[leaf.id].size() ? grads_[leaf.id]
                                             : Tn(val(leaf).rows, val(leaf).cols);
        Tn& param = nodes_[leaf.id].value;
        double worst = 0.0;
        for (std::size_t i = 0; i < param.size(); ++i) {
            const T keep = param.data[i];
            param.data[i] = keep + static_cast<T>(eps);
            refresh();
            const double fp = static_cast<double>(nodes_[loss.id].value.data[0]);
            param.data[i] = keep - static_cast<T>(eps);
            refresh();
            const double fm = static_cast<double>(nodes_[loss.id].value.data[0]);
            param.data[i] = keep;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = static_cast<double>(analytic.data[i]);
            const double denom = std::max({std::abs(numeric), std::abs(a), floor});
            worst = std::max(worst, std::abs(numeric - a) / denom);
        }
        refresh();
        return worst;
    }

    static void matmul_nn(const Tn& a, const Tn& b, Tn& out) {
        // ikj order keeps the inner loop contiguous
#pragma omp parallel for schedule(static) if (a.rows > 128)
        for (std::size_t i = 0; i < a.rows; ++i) {
            T* orow = out.row_ptr(i);
            const T* arow = a.row_ptr(i);
            for (std::size_t p = 0; p < a.cols; ++p) {
                const T av = arow[p];
                if (av == T(0)) continue;
                const T* brow = b.row_ptr(p);
                for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
            }
        }
    }

    static void spmm_kernel(const SparseMatrix& s, const Tn& x, Tn& out) {
#pragma omp parallel for schedule(static) if (s.n_rows > 128)
        for (std::size_t r = 0; r < s.n_rows; ++r) {
            T* orow = out.row_ptr(r);
            for (std::size_t p = s.row_begin(r); p < s.row_end(r); ++p) {
                const T w = static_cast<T>(s.values[p]);
                const T* xrow = x.row_ptr(s.col_indices[p]);
                for (std::size_t c = 0; c < x.cols; ++c) orow[c] += w * xrow[c];
            }
        }
    }

    static T sigmoid_scalar(T x) { return t_sigmoid(x); }

    static void softmax_row(T* row, std::size_t nv) {
        T mx = row[0];
        for (std::size_t i = 1; i < nv; ++i) mx = std::max(mx, row[i]);
        T sum = T(0);
        for (std::size_t i = 0; i < nv; ++i) {
            row[i] = t_exp(row[i] - mx);
            sum += row[i];
        }
        for (std::size_t i = 0; i < nv; ++i) row[i] /= sum;
    }

  private:
    std::vector<Node> nodes_;
    std::vector<Tn> grads_;
    std::vector<bool> visited_;

    const Tn& val(Var v) const { return nodes_[v.id].value; }

    void require_same_shape(Var a, Var b, const char* what) const {
        if (!val(a).same_shape(val(b))) throw InputError(std::string(what) + ": shape mismatch");
    }

    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size() - 1)};
    }

    void mark(int id) {
        if (visited_[id]) return;
        visited_[id] = true;
        const Node& n = nodes_[id];
        if (n.a >= 0) mark(n.a);
        if (n.b >= 0) mark(n.b);
        if (n.c >= 0) mark(n.c);
    }

    Tn& ensure_grad(int id) {
        if (grads_[id].size() == 0)
            grads_[id] = Tn(nodes_[id].value.rows, nodes_[id].value.cols);
        return grads_[id];
    }

    void backprop_node(int id) {
        Node& n = nodes_[id];
        const Tn& g = grads_[id];
        switch (n.op) {
            case Op::kLeaf:
            case Op::kConstant:
                break;
            case Op::kAdd: {
                axpy(ensure_grad(n.a), g, T(1));
                axpy(ensure_grad(n.b), g, T(1));
                break;
            }
            case Op::kSub: {
                axpy(ensure_grad(n.a), g, T(1));
                axpy(ensure_grad(n.b), g, T(-1));
                break;
            }
            case Op::kMul: {
                Tn& ga = ensure_grad(n.a);
                Tn& gb = ensure_grad(n.b);
                const Tn& va = nodes_[n.a].value;
                const Tn& vb = nodes_[n.b].value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga.data[i] += g.data[i] * vb.data[i];
                    gb.data[i] += g.data[i] * va.data[i];
                }
                break;
            }
            case Op::kAddRowVec: {
                axpy(ensure_grad(n.a), g, T(1));
                Tn& gv = ensure_grad(n.b);
                for (std::size_t r = 0; r < g.rows; ++r)
                    for (std::size_t c = 0; c < g.cols; ++c) gv.data[c] += g(r, c);
                break;
            }
            case Op::kScale: {
                axpy(ensure_grad(n.a), g, static_cast<T>(n.scalar));
                break;
            }
            case Op::kClampMin: {
                Tn& ga = ensure_grad(n.a);
                const Tn& va = nodes_[n.a].value;
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (va.data[i] >= static_cast<T>(n.scalar)) ga.data[i] += g.data[i];
                break;
            }
            case Op::kMatMul: {
                // dA += g B^T, dB += A^T g
                Tn& ga = ensure_grad(n.a);
                Tn& gb = ensure_grad(n.b);
                const Tn& va = nodes_[n.a].value;
                const Tn& vb = nodes_[n.b].value;
                for (std::size_t i = 0; i < ga.rows; ++i) {
                    T* garow = ga.row_ptr(i);
                    const T* grow = g.row_ptr(i);
                    for (std::size_t p = 0; p < vb.rows; ++p) {
                        const T* brow = vb.row_ptr(p);
                        T s = T(0);
                        for (std::size_t j = 0; j < g.cols; ++j) s += grow[j] * brow[j];
                        garow[p] += s;
                    }
                }
                for (std::size_t p = 0; p < va.rows; ++p) {
                    const T* arow = va.row_ptr(p);
                    const T* grow = g.row_ptr(p);
                    for (std::size_t i = 0; i < gb.rows; ++i) {
                        const T av = arow[i];
                        if (av == T(0)) continue;
                        T* gbrow = gb.row_ptr(i);
                        for (std::size_t j = 0; j < g.cols; ++j) gbrow[j] += av * grow[j];
                    }
                }
                break;
            }
            case Op::kTranspose: {
                Tn& ga = ensure_grad(n.a);
                for (std::size_t r = 0; r < g.rows; ++r)
                    for (std::size_t c = 0; c < g.cols; ++c) ga(c, r) += g(r, c);
                break;
            }
            case Op::kSigmoid: {
                Tn& ga = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const T y = n.value.data[i];
                    ga.data[i] += g.data[i] * y * (T(1) - y);
                }
                break;
            }
            case Op::kLogSigmoid: {
                Tn& ga = ensure_grad(n.a);
                const Tn& va = nodes_[n.a].value;
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga.data[i] += g.data[i] * sigmoid_scalar(-va.data[i]);
                break;
            }
            case Op::kRelu: {
                Tn& ga = ensure_grad(n.a);
                const Tn& va = nodes_[n.a].value;
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (va.data[i] > T(0)) ga.data[i] += g.data[i];
                break;
            }
            case Op::kLog: {
                Tn& ga = ensure_grad(n.a);
                const Tn& va = nodes_[n.a].value;
                for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] / va.data[i];
                break;
            }
            case Op::kExp: {
                Tn& ga = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga.data[i] += g.data[i] * n.value.data[i];
                break;
            }
            case Op::kSoftmaxRows: {
                Tn& ga = ensure_grad(n.a);
                for (std::size_t r = 0; r < g.rows; ++r) {
                    const T* y = n.value.row_ptr(r);
                    const T* gr = g.row_ptr(r);
                    T inner = T(0);
                    for (std::size_t c = 0; c < g.cols; ++c) inner += gr[c] * y[c];
                    T* gar = ga.row_ptr(r);
                    for (std::size_t c = 0; c < g.cols; ++c)
                        gar[c] += y[c] * (gr[c] - inner);
                }
                break;
            }
            case Op::kSum: {
                Tn& ga = ensure_grad(n.a);
                const T gv = g.data[0];
                for (auto& x : ga.data) x += gv;
                break;
            }
            case Op::kDot: {
                Tn& ga = ensure_grad(n.a);
                Tn& gb = ensure_grad(n.b);
                const Tn& va = nodes_[n.a].value;
                const Tn& vb = nodes_[n.b].value;
                const T gv = g.data[0];
                for (std::size_t i = 0; i < va.size(); ++i) {
                    ga.data[i] += gv * vb.data[i];
                    gb.data[i] += gv * va.data[i];
                }
                break;
            }
            case Op::kRowsDot: {
                Tn& ga = ensure_grad(n.a);
                Tn& gb = ensure_grad(n.b);
                const Tn& va = nodes_[n.a].value;
                const Tn& vb = nodes_[n.b].value;
                for (std::size_t r = 0; r < va.rows; ++r) {
                    const T gv = g(r, 0);
                    T* gar = ga.row_ptr(r);
                    T* gbr = gb.row_ptr(r);
                    const T* var = va.row_ptr(r);
                    const T* vbr = vb.row_ptr(r);
                    for (std::size_t c = 0; c < va.cols; ++c) {
                        gar[c] += gv * vbr[c];
                        gbr[c] += gv * var[c];
                    }
                }
                break;
            }
            case Op::kGatherRows: {
                Tn& ga = ensure_grad(n.a);
                const auto& idx = n.indices;
                for (std::size_t i = 0; i < idx.size(); ++i) {
                    if (idx[i] < 0) continue;
                    T* dst = ga.row_ptr(static_cast<std::size_t>(idx[i]));
                    const T* src = g.row_ptr(i);
                    for (std::size_t c = 0; c < g.cols; ++c) dst[c] += src[c];
                }
                break;
            }
            case Op::kConcatCols: {
                Tn& ga = ensure_grad(n.a);
                Tn& gb = ensure_grad(n.b);
                for (std::size_t r = 0; r < g.rows; ++r) {
                    const T* gr = g.row_ptr(r);
                    T* gar = ga.row_ptr(r);
                    T* gbr = gb.row_ptr(r);
                    for (std::size_t c = 0; c < ga.cols; ++c) gar[c] += gr[c];
                    for (std::size_t c = 0; c < gb.cols; ++c) gbr[c] += gr[ga.cols + c];
                }
                break;
            }
            case Op::kReshape: {
                Tn& ga = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                break;
            }
            case Op::kSumRows: {
                Tn& ga = ensure_grad(n.a);
                for (std::size_t r = 0; r < ga.rows; ++r)
                    for (std::size_t c = 0; c < ga.cols; ++c) ga(r, c) += g.data[c];
                break;
            }
            case Op::kRowBroadcast: {
                Tn& ga = ensure_grad(n.a);
                for (std::size_t r = 0; r < g.rows; ++r)
                    for (std::size_t c = 0; c < g.cols; ++c) ga.data[c] += g(r, c);
                break;
            }
            case Op::kSpmm: {
                Tn& ga = ensure_grad(n.a);
                spmm_kernel(*n.spt, g, ga);
                break;
            }
            case Op::kWeightedGatherSum: {
                Tn& gw = ensure_grad(n.a);
                Tn& gx = ensure_grad(n.b);
                const Tn& vw = nodes_[n.a].value;
                const Tn& vx = nodes_[n.b].value;
                const auto& idx = n.indices;
                const std::size_t k = n.aux_cols;
                for (std::size_t u = 0; u < vw.rows; ++u) {
                    const T* gr = g.row_ptr(u);
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::int64_t v = idx[u * k + j];
                        if (v < 0) continue;
                        const T* xr = vx.row_ptr(static_cast<std::size_t>(v));
                        T* gxr = gx.row_ptr(static_cast<std::size_t>(v));
                        const T w = vw(u, j);
                        T s = T(0);
                        for (std::size_t c = 0; c < vx.cols; ++c) {
                            s += gr[c] * xr[c];
                            gxr[c] += w * gr[c];
                        }
                        gw(u, j) += s;
                    }
                }
                break;
            }
            case Op::kAttnScores: {
                Tn& gp = ensure_grad(n.a);
                Tn& gc = ensure_grad(n.b);
                Tn& gq = ensure_grad(n.c);
                const Tn& vp = nodes_[n.a].value;
                const Tn& vc = nodes_[n.b].value;
                const Tn& vq = nodes_[n.c].value;
                const std::size_t d = vp.cols;
                const std::size_t k = n.aux_cols;
                const auto& idx = n.indices;
                const T* qu = vq.data.data();
                const T* qi = vq.data.data() + d;
                for (std::size_t u = 0; u < vc.rows; ++u) {
                    // accumulated upstream weight for the shared context part
                    T gctx = T(0);
                    const T* pu = vp.row_ptr(u);
                    T* gpu = gp.row_ptr(u);
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::int64_t v = idx[u * k + j];
                        if (v < 0) continue;
                        const T gs = g(u, j);
                        if (gs == T(0)) continue;
                        gctx += gs;
                        const T* pv = vp.row_ptr(static_cast<std::size_t>(v));
                        T* gpv = gp.row_ptr(static_cast<std::size_t>(v));
                        for (std::size_t t = 0; t < d; ++t) {
                            const T s = sigmoid_scalar(pu[t] + pv[t]);
                            gq.data[t] += gs * s;
                            const T dz = gs * qu[t] * s * (T(1) - s);
                            gpu[t] += dz;
                            gpv[t] += dz;
                        }
                    }
                    if (gctx != T(0)) {
                        const T* cu = vc.row_ptr(u);
                        T* gcu = gc.row_ptr(u);
                        for (std::size_t t = 0; t < d; ++t) {
                            const T s = sigmoid_scalar(cu[t]);
                            gq.data[d + t] += gctx * s;
                            gcu[t] += gctx * qi[t] * s * (T(1) - s);
                        }
                    }
                }
                break;
            }
        }
    }

    static void axpy(Tn& y, const Tn& x, T alpha) {
        for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += alpha * x.data[i];
    }

    void recompute(int id) {
        Node& n = nodes_[id];
        switch (n.op) {
            case Op::kLeaf:
            case Op::kConstant:
                return;
            default:
                break;
        }
        const Tn* va = n.a >= 0 ? &nodes_[n.a].value : nullptr;
        const Tn* vb = n.b >= 0 ? &nodes_[n.b].value : nullptr;
        switch (n.op) {
            case Op::kAdd:
                for (std::size_t i = 0; i < n.value.size(); ++i)
                    n.value.data[i] = va->data[i] + vb->data[i];
                break;
            case Op::kSub:
                for (std::size_t i = 0; i < n.value.size(); ++i)
                    n.value.data[i] = va->data[i] - vb->data[i];
                break;
            case Op::kMul:
                for (std::size_t i = 0; i < n.value.size(); ++i)
                    n.value.data[i] = va->data[i] * vb->data[i];
                break;
            case Op::kAddRowVec:
                for (std::size_t r = 0; r < n.value.rows; ++r)
                    for (std::size_t c = 0; c < n.value.cols; ++c)
                        n.value(r, c) = (*va)(r, c) + vb->data[c];
                break;
            case Op::kScale:
                for (std::size_t i = 0; i < n.value.size(); ++i)
                    n.value.data[i] = static_cast<T>(va->data[i] * n.scalar);
                break;
            case Op::kClampMin:
                for (std::size_t i = 0; i < n.value.size(); ++i)
                    n.value.data[i] = std::max(va->data[i], static_cast<T>(n.scalar));
                break;
            case Op::kMatMul:
                n.value.fill(T(0));
                matmul_nn(*va, *vb, n.value);
                break;
            case Op::kTranspose:
                for (std::size_t r = 0; r < va->rows; ++r)
                    for (std::size_t c = 0; c < va->cols; ++c) n.value(c, r) = (*va)(r, c);
                break;
            case Op::kSigmoid:
                for (std::size_t i = 0; i < n.value.size(); ++i)
                    n.value.data[i] = sigmoid_scalar(va->data[i]);
                break;
            case Op::kLogSigmoid:
                for (std::size_t i = 0; i < n.value.size(); ++i) {
                    double v = static_cast<double>(va->data[i]);
                    n.value.data[i] = static_cast<T>(v >= 0.0 ? -std::log1p(std::exp(-v))
                                                              : v - std::log1p(std::exp(v)));
                }
                break;
            case Op::kRelu:
                for (std::size_t i = 0; i < n.value.size(); ++i)
                    n.value.data[i] = std::max(va->data[i], T(0));
                break;
            case Op::kLog:
                for (std::size_t i = 0; i < n.value.size(); ++i)
                    n.value.data[i] = t_log(va->data[i]);
                break;
            case Op::kExp:
                for (std::size_t i = 0; i < n.value.size(); ++i)
                    n.value.data[i] = t_exp(va->data[i]);
                break;
            case Op::kSoftmaxRows:
                n.value = *va;
                for (std::size_t r = 0; r < n.value.rows; ++r)
                    softmax_row(n.value.row_ptr(r), n.value.cols);
                break;
            case Op::kSum: {
                double s = 0.0;
                for (T x : va->data) s += static_cast<double>(x);
                n.value.data[0] = static_cast<T>(s);
                break;
            }
            case Op::kDot: {
                double s = 0.0;
                for (std::size_t i = 0; i < va->size(); ++i)
                    s += static_cast<double>(va->data[i]) * static_cast<double>(vb->data[i]);
                n.value.data[0] = static_cast<T>(s);
                break;
            }
            case Op::kRowsDot:
                for (std::size_t r = 0; r < va->rows; ++r) {
                    T s = T(0);
                    const T* pa = va->row_ptr(r);
                    const T* pb = vb->row_ptr(r);
                    for (std::size_t c = 0; c < va->cols; ++c) s += pa[c] * pb[c];
                    n.value(r, 0) = s;
                }
                break;
            case Op::kGatherRows: {
                n.value.fill(T(0));
                const auto& idx = n.indices;
                for (std::size_t i = 0; i < idx.size(); ++i) {
                    if (idx[i] < 0) continue;
                    const T* src = va->row_ptr(static_cast<std::size_t>(idx[i]));
                    std::copy(src, src + va->cols, n.value.row_ptr(i));
                }
                break;
            }
            case Op::kConcatCols:
                for (std::size_t r = 0; r < n.value.rows; ++r) {
                    std::copy(va->row_ptr(r), va->row_ptr(r) + va->cols, n.value.row_ptr(r));
                    std::copy(vb->row_ptr(r), vb->row_ptr(r) + vb->cols,
                              n.value.row_ptr(r) + va->cols);
                }
                break;
            case Op::kReshape:
                std::copy(va->data.begin(), va->data.end(), n.value.data.begin());
                break;
            case Op::kSumRows:
                n.value.fill(T(0));
                for (std::size_t r = 0; r < va->rows; ++r)
                    for (std::size_t c = 0; c < va->cols; ++c) n.value.data[c] += (*va)(r, c);
                break;
            case Op::kRowBroadcast:
                for (std::size_t r = 0; r < n.value.rows; ++r)
                    std::copy(va->data.begin(), va->data.end(), n.value.row_ptr(r));
                break;
            case Op::kSpmm:
                n.value.fill(T(0));
                spmm_kernel(*n.sp, *va, n.value);
                break;
            case Op::kWeightedGatherSum: {
                n.value.fill(T(0));
                const auto& idx = n.indices;
                const std::size_t k = n.aux_cols;
                for (std::size_t u = 0; u < va->rows; ++u) {
                    T* out = n.value.row_ptr(u);
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::int64_t v = idx[u * k + j];
                        if (v < 0) continue;
                        const T w = (*va)(u, j);
                        const T* src = vb->row_ptr(static_cast<std::size_t>(v));
                        for (std::size_t c = 0; c < vb->cols; ++c) out[c] += w * src[c];
                    }
                }
                break;
            }
            case Op::kAttnScores: {
                const Tn& vc = nodes_[n.b].value;
                const Tn& vq = nodes_[n.c].value;
                const std::size_t d = va->cols;
                const std::size_t k = n.aux_cols;
                const auto& idx = n.indices;
                const T* qu = vq.data.data();
                const T* qi = vq.data.data() + d;
#pragma omp parallel for schedule(static) if (vc.rows > 128)
                for (std::size_t u = 0; u < vc.rows; ++u) {
                    T ctx_part = T(0);
                    const T* cu = vc.row_ptr(u);
                    for (std::size_t t = 0; t < d; ++t) ctx_part += qi[t] * sigmoid_scalar(cu[t]);
                    const T* pu = va->row_ptr(u);
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::int64_t v = idx[u * k + j];
                        if (v < 0) {
                            n.value(u, j) = T(-1e30);
                            continue;
                        }
                        const T* pv = va->row_ptr(static_cast<std::size_t>(v));
                        T s = ctx_part;
                        for (std::size_t t = 0; t < d; ++t)
                            s += qu[t] * sigmoid_scalar(pu[t] + pv[t]);
                        n.value(u, j) = s;
                    }
                }
                break;
            }
            case Op::kLeaf:
            case Op::kConstant:
                break;
        }
    }
};

}  // namespace esrf
