#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "esrf/model.hpp"
#include "esrf/rng.hpp"
#include "esrf/sparse.hpp"
#include "esrf/tape.hpp"
#include "esrf/tensor.hpp"

namespace esrf {

constexpr double kAlphaFloor = 1e-10;  // keeps log(alpha) finite

/// Concrete-selector output for one user: k relaxed one-hot rows over the m
/// candidate users, each summing to 1.
template <typename T>
struct RelaxedSelection {
    Tensor<T> v;  // k x m
    double tau = 0.0;
};

/// Hardened neighborhood: unique neighbor ids (the user herself excluded)
/// with merged selection weights.
struct AlternativeNeighborhood {
    std::vector<std::size_t> indices;
    std::vector<double> weights;
};

// ---------------------------------------------------------------------------
// Plain (inference-path) operations
// ---------------------------------------------------------------------------

/// Light GCN propagation over the motif adjacency: E(l+1) = A_norm E(l), no
/// transform, no nonlinearity; returns the layer mean (1/(L+1)) sum E(l).
template <typename T>
Tensor<T> propagate(const SparseMatrix& normalized, const Tensor<T>& e0, int layers) {
    if (layers < 0) throw InputError("propagate: layer count must be non-negative");
    Tensor<T> acc = e0;
    Tensor<T> cur = e0;
    Tensor<T> next(e0.rows, e0.cols);
    for (int l = 0; l < layers; ++l) {
        next.fill(T(0));
        Tape<T>::spmm_kernel(normalized, cur, next);
        std::swap(cur, next);
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += cur.data[i];
    }
    const T f = T(1) / static_cast<T>(layers + 1);
    for (auto& v : acc.data) v *= f;
    return acc;
}

/// Adjoint of `propagate`: maps d(loss)/d(E*) back to d(loss)/d(E0).
template <typename T>
Tensor<T> propagate_backward(const SparseMatrix& normalized_t, const Tensor<T>& d_estar,
                             int layers) {
    Tensor<T> acc = d_estar;
    Tensor<T> cur = d_estar;
    Tensor<T> next(d_estar.rows, d_estar.cols);
    for (int l = 0; l < layers; ++l) {
        next.fill(T(0));
        Tape<T>::spmm_kernel(normalized_t, cur, next);
        std::swap(cur, next);
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += cur.data[i];
    }
    const T f = T(1) / static_cast<T>(layers + 1);
    for (auto& v : acc.data) v *= f;
    return acc;
}

/// Selector logits for one user: row i = softmax over all m users of
/// (E e_u^T) o h_i. Every row sums to 1.
template <typename T>
Tensor<T> selector_logits(const Tensor<T>& estar, const Tensor<T>& h, std::size_t user) {
    const std::size_t m = estar.rows, d = estar.cols, k = h.rows;
    if (user >= m) throw InputError("selector_logits: user index out of range");
    std::vector<T> s(m, T(0));
    const T* eu = estar.row_ptr(user);
    for (std::size_t w = 0; w < m; ++w) {
        const T* ew = estar.row_ptr(w);
        T acc = T(0);
        for (std::size_t c = 0; c < d; ++c) acc += ew[c] * eu[c];
        s[w] = acc;
    }
    Tensor<T> alpha(k, m);
    for (std::size_t i = 0; i < k; ++i) {
        T* row = alpha.row_ptr(i);
        const T* hi = h.row_ptr(i);
        for (std::size_t w = 0; w < m; ++w) row[w] = s[w] * hi[w];
        Tape<T>::softmax_row(row, m);
    }
    return alpha;
}

/// Eq.-5 concrete relaxation with explicit noise: v_i = softmax((log alpha_i
/// + g_i) / tau). `self_index`, when given, masks the user out of alpha (its
/// logit drops to the floor) before relaxation.
template <typename T>
RelaxedSelection<T> concrete_relax(const Tensor<T>& alpha, double tau, const Tensor<T>& noise,
                                   std::int64_t self_index = -1) {
    if (!(tau > 0.0)) throw InputError("select_neighborhood: tau must be positive");
    if (!alpha.same_shape(noise)) throw InputError("concrete_relax: noise shape mismatch");
    RelaxedSelection<T> sel;
    sel.tau = tau;
    sel.v = alpha;
    for (std::size_t i = 0; i < sel.v.rows; ++i) {
        T* row = sel.v.row_ptr(i);
        const T* g = noise.row_ptr(i);
        if (self_index >= 0) row[self_index] = T(0);
        for (std::size_t j = 0; j < sel.v.cols; ++j) {
            const T a = std::max(row[j], static_cast<T>(kAlphaFloor));
            row[j] = static_cast<T>((std::log(static_cast<double>(a)) + g[j]) / tau);
        }
        Tape<T>::softmax_row(row, sel.v.cols);
    }
    return sel;
}

/// Eq.-5 concrete relaxation with fresh Gumbel noise per row drawn from `rng`.
template <typename T>
RelaxedSelection<T> select_neighborhood(const Tensor<T>& alpha, double tau, Rng& rng,
                                        std::int64_t self_index = -1) {
    if (!(tau > 0.0)) throw InputError("select_neighborhood: tau must be positive");
    Tensor<T> noise = gumbel_sample<T>(alpha.rows, alpha.cols, rng);
    return concrete_relax(alpha, tau, noise, self_index);
}

/// Per-neuron argmax with duplicate merging and self-exclusion. Ties break to
/// the lowest index so the discretization is deterministic.
template <typename T>
AlternativeNeighborhood harden(const RelaxedSelection<T>& selection, std::size_t user) {
    AlternativeNeighborhood out;
    for (std::size_t i = 0; i < selection.v.rows; ++i) {
        const T* row = selection.v.row_ptr(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < selection.v.cols; ++j)
            if (row[j] > row[best]) best = j;
        if (best == user) continue;
        auto it = std::find(out.indices.begin(), out.indices.end(), best);
        if (it == out.indices.end()) {
            out.indices.push_back(best);
            out.weights.push_back(1.0);
        } else {
            out.weights[static_cast<std::size_t>(it - out.indices.begin())] += 1.0;
        }
    }
    return out;
}

/// Decoder: sums the k relaxed rows into one m-vector, applies the hidden
/// layer (m -> t, rectified) and the linear output layer (t -> m).
template <typename T>
Tensor<T> decode(const RelaxedSelection<T>& selection, const GeneratorParams<T>& params) {
    const std::size_t m = selection.v.cols, t = params.dec_w1.cols;
    Tensor<T> x(1, m);
    for (std::size_t i = 0; i < selection.v.rows; ++i) {
        const T* row = selection.v.row_ptr(i);
        for (std::size_t j = 0; j < m; ++j) x.data[j] += row[j];
    }
    Tensor<T> hidden(1, t);
    for (std::size_t c = 0; c < m; ++c) {
        const T xv = x.data[c];
        if (xv == T(0)) continue;
        const T* wrow = params.dec_w1.row_ptr(c);
        for (std::size_t j = 0; j < t; ++j) hidden.data[j] += xv * wrow[j];
    }
    for (std::size_t j = 0; j < t; ++j)
        hidden.data[j] = std::max(hidden.data[j] + params.dec_b1.data[j], T(0));
    Tensor<T> out(1, m);
    for (std::size_t c = 0; c < t; ++c) {
        const T hv = hidden.data[c];
        if (hv == T(0)) continue;
        const T* wrow = params.dec_w2.row_ptr(c);
        for (std::size_t j = 0; j < m; ++j) out.data[j] += hv * wrow[j];
    }
    for (std::size_t j = 0; j < m; ++j) out.data[j] += params.dec_b2.data[j];
    return out;
}

/// Squared Frobenius norm of (target - reconstructed) over the given rows.
template <typename T>
double reconstruction_loss(const std::vector<Tensor<T>>& reconstructed,
                           const std::vector<Tensor<T>>& target) {
    if (reconstructed.size() != target.size())
        throw InputError("reconstruction_loss: row count mismatch");
    double loss = 0.0;
    for (std::size_t r = 0; r < reconstructed.size(); ++r) {
        if (!reconstructed[r].same_shape(target[r]))
            throw InputError("reconstruction_loss: shape mismatch");
        for (std::size_t j = 0; j < target[r].size(); ++j) {
            const double diff = static_cast<double>(target[r].data[j]) -
                                static_cast<double>(reconstructed[r].data[j]);
            loss += diff * diff;
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Tape builders (training path). The same graph shapes are used for the toy
// gradient checks, so the trained path is exactly what grad_check validates.
// ---------------------------------------------------------------------------

template <typename T>
struct GeneratorTapeVars {
    Var e0, h, dec_w1, dec_b1, dec_w2, dec_b2;
    Var estar;
};

/// Registers generator leaves and the propagation chain.
template <typename T>
GeneratorTapeVars<T> build_generator_graph(Tape<T>& tape, const GeneratorParams<T>& params,
                                           const SparseMatrix& a_norm,
                                           const SparseMatrix& a_norm_t, int layers) {
    GeneratorTapeVars<T> vars;
    vars.e0 = tape.leaf(params.e0);
    vars.h = tape.leaf(params.h);
    vars.dec_w1 = tape.leaf(params.dec_w1);
    vars.dec_b1 = tape.leaf(params.dec_b1);
    vars.dec_w2 = tape.leaf(params.dec_w2);
    vars.dec_b2 = tape.leaf(params.dec_b2);
    Var cur = vars.e0;
    Var acc = vars.e0;
    for (int l = 0; l < layers; ++l) {
        cur = tape.spmm(a_norm, a_norm_t, cur);
        acc = tape.add(acc, cur);
    }
    vars.estar = tape.scale(acc, 1.0 / (layers + 1));
    return vars;
}

/// Concrete selection v (k x m) for one user on the tape. `noise` is the
/// k x m Gumbel draw for this regeneration; the self column of alpha is
/// masked to the floor.
template <typename T>
Var build_selection(Tape<T>& tape, Var estar, Var h, std::size_t user, std::size_t k,
                    const Tensor<T>& noise, double tau) {
    if (!(tau > 0.0)) throw InputError("build_selection: tau must be positive");
    std::vector<std::int64_t> self_idx = {static_cast<std::int64_t>(user)};
    Var eu = tape.gather_rows(estar, self_idx);            // 1 x d
    Var s = tape.matmul(estar, tape.transpose(eu));        // m x 1
    Var srow = tape.transpose(s);                          // 1 x m
    Var sk = tape.row_broadcast(srow, k);                  // k x m
    Var z = tape.mul(sk, h);
    Var alpha = tape.softmax_rows(z);
    Tensor<T> mask(1, tape.value(estar).rows, T(1));
    mask.data[user] = T(0);
    Var masked = tape.mul(alpha, tape.row_broadcast(tape.constant(mask), k));
    Var floored = tape.clamp_min(masked, kAlphaFloor);
    Var logits = tape.add(tape.log(floored), tape.constant(noise));
    return tape.softmax_rows(tape.scale(logits, 1.0 / tau));
}

/// Reconstruction term ||target_row - decode(v)||^2 on the tape.
template <typename T>
Var build_reconstruction_term(Tape<T>& tape, Var v, const GeneratorTapeVars<T>& gen,
                              const Tensor<T>& target_row) {
    Var x = tape.sum_rows(v);  // 1 x m
    Var hidden = tape.relu(tape.add_rowvec(tape.matmul(x, gen.dec_w1), gen.dec_b1));
    Var out = tape.add_rowvec(tape.matmul(hidden, gen.dec_w2), gen.dec_b2);
    Var diff = tape.sub(out, tape.constant(target_row));
    return tape.dot(diff, diff);
}

/// Mixture weights over candidate users: the mean of the k relaxed rows.
template <typename T>
Var build_mixture_weights(Tape<T>& tape, Var v, std::size_t k) {
    return tape.scale(tape.sum_rows(v), 1.0 / static_cast<double>(k));
}

}  // namespace esrf
