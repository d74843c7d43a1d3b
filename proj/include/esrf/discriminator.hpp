#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "esrf/generator.hpp"
#include "esrf/model.hpp"
#include "esrf/sparse.hpp"
#include "esrf/tape.hpp"

namespace esrf {

/// Symmetric-normalized interaction weights: w(u,i) = 1/sqrt(|N(u)||N(i)|)
/// for every positive pair. Zero-degree nodes simply get no weights.
inline SparseMatrix interaction_norm(const SparseMatrix& y) {
    if (!y.binary()) throw InputError("interaction_norm: Y must be binary");
    std::vector<double> item_deg(y.n_cols, 0.0);
    for (std::size_t c : y.col_indices) item_deg[c] += 1.0;
    SparseMatrix out = y;
    for (std::size_t r = 0; r < y.n_rows; ++r) {
        const double du = static_cast<double>(y.row_end(r) - y.row_begin(r));
        for (std::size_t p = y.row_begin(r); p < y.row_end(r); ++p)
            out.values[p] = 1.0 / std::sqrt(du * item_deg[y.col_indices[p]]);
    }
    return out;
}

/// Fixed-width neighbor table (-1 pads) holding every user's alternative
/// neighborhood for one propagation.
struct NeighborhoodTable {
    std::size_t num_users = 0;
    std::size_t k = 0;
    std::vector<std::int64_t> idx;   // num_users * k
    std::vector<std::size_t> count;  // valid neighbors per user

    static NeighborhoodTable empty(std::size_t users, std::size_t k) {
        NeighborhoodTable t;
        t.num_users = users;
        t.k = k;
        t.idx.assign(users * k, -1);
        t.count.assign(users, 0);
        return t;
    }

    void set(std::size_t user, const AlternativeNeighborhood& nbh) {
        const std::size_t n = std::min(nbh.indices.size(), k);
        for (std::size_t j = 0; j < k; ++j)
            idx[user * k + j] =
                j < n ? static_cast<std::int64_t>(nbh.indices[j]) : std::int64_t(-1);
        count[user] = n;
    }

    template <typename T>
    Tensor<T> valid_mask() const {
        Tensor<T> mask(num_users, k);
        for (std::size_t i = 0; i < idx.size(); ++i) mask.data[i] = idx[i] >= 0 ? T(1) : T(0);
        return mask;
    }

    /// Uniform 1/|A_u| weights (the attention ablation).
    template <typename T>
    Tensor<T> uniform_weights() const {
        Tensor<T> w(num_users, k);
        for (std::size_t u = 0; u < num_users; ++u)
            for (std::size_t j = 0; j < k; ++j)
                if (idx[u * k + j] >= 0) w(u, j) = T(1) / static_cast<T>(count[u]);
        return w;
    }
};

enum class AttentionMode { kLearned, kUniform };

template <typename T>
struct DiscGraphConfig {
    const SparseMatrix* yn = nullptr;   // m x n normalized weights
    const SparseMatrix* ynt = nullptr;  // its transpose
    const NeighborhoodTable* social = nullptr;        // null: pure interaction propagation
    const std::vector<std::int64_t>* contexts = nullptr;  // per-user context item, -1 = none
    int layers = 1;
    AttentionMode attention = AttentionMode::kLearned;
};

template <typename T>
struct DiscTapeVars {
    Var user_e0, item_e0;
    std::vector<Var> q, w1, w2;
    std::vector<Var> alpha;  // per layer, m x k, padding masked to zero
    std::vector<Var> user_layers, item_layers;  // layers 0..L
    Var user_final, item_final;
};

/// Records the attentive propagation (Eqs. 7-10) on the tape and returns the
/// layer-mean final embeddings. With `social == nullptr` the graph reduces to
/// plain interaction propagation; that reduced graph *is* the LightGCN
/// baseline, there is no separate propagation code path.
template <typename T>
DiscTapeVars<T> build_discriminator_graph(Tape<T>& tape, const DiscriminatorParams<T>& params,
                                          const DiscGraphConfig<T>& cfg) {
    DiscTapeVars<T> vars;
    vars.user_e0 = tape.leaf(params.user_e0);
    vars.item_e0 = tape.leaf(params.item_e0);
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        vars.q.push_back(tape.leaf(params.q[l]));
        vars.w1.push_back(tape.leaf(params.w1[l]));
        vars.w2.push_back(tape.leaf(params.w2[l]));
    }
    const bool social_on = cfg.social != nullptr && cfg.social->k > 0;
    Var eu = vars.user_e0;
    Var ei = vars.item_e0;
    Var accu = eu, acci = ei;
    vars.user_layers.push_back(eu);
    vars.item_layers.push_back(ei);
    for (int l = 0; l < cfg.layers; ++l) {
        Var from_items = tape.spmm(*cfg.yn, *cfg.ynt, ei);
        Var from_users = tape.spmm(*cfg.ynt, *cfg.yn, eu);
        Var eu_next = from_items;
        if (social_on) {
            const std::size_t k = cfg.social->k;
            Var weights;
            if (cfg.attention == AttentionMode::kLearned) {
                const std::size_t li = std::min<std::size_t>(l, params.layer_count() - 1);
                Var p1 = tape.matmul(eu, vars.w1[li]);
                Var ctx = tape.gather_rows(ei, *cfg.contexts);
                Var cw = tape.matmul(ctx, vars.w2[li]);
                Var scores = tape.attn_scores(p1, cw, vars.q[li], cfg.social->idx, k);
                Var a = tape.softmax_rows(scores);
                weights = tape.mul(a, tape.constant(cfg.social->template valid_mask<T>()));
            } else {
                weights = tape.constant(cfg.social->template uniform_weights<T>());
            }
            vars.alpha.push_back(weights);
            Var social = tape.weighted_gather_sum(weights, eu, cfg.social->idx, k);
            eu_next = tape.add(social, from_items);
        }
        eu = eu_next;
        ei = from_users;
        vars.user_layers.push_back(eu);
        vars.item_layers.push_back(ei);
        accu = tape.add(accu, eu);
        acci = tape.add(acci, ei);
    }
    vars.user_final = tape.scale(accu, 1.0 / (cfg.layers + 1));
    vars.item_final = tape.scale(acci, 1.0 / (cfg.layers + 1));
    return vars;
}

/// lambda ||Phi||^2 over the discriminator leaves.
template <typename T>
Var build_reg_term(Tape<T>& tape, const DiscTapeVars<T>& vars, double lambda) {
    Var acc = tape.dot(vars.user_e0, vars.user_e0);
    acc = tape.add(acc, tape.dot(vars.item_e0, vars.item_e0));
    for (std::size_t l = 0; l < vars.q.size(); ++l) {
        acc = tape.add(acc, tape.dot(vars.q[l], vars.q[l]));
        acc = tape.add(acc, tape.dot(vars.w1[l], vars.w1[l]));
        acc = tape.add(acc, tape.dot(vars.w2[l], vars.w2[l]));
    }
    return tape.scale(acc, lambda);
}

struct TripleBatch {
    std::vector<std::int64_t> users, pos, neg;
    std::size_t size() const { return users.size(); }
};

/// Pairwise ranking term: sum over triples of -log sigmoid(y_ui - y_uj).
template <typename T>
Var build_bpr_term(Tape<T>& tape, const DiscTapeVars<T>& vars, const TripleBatch& batch) {
    Var eu = tape.gather_rows(vars.user_final, batch.users);
    Var epi = tape.gather_rows(vars.item_final, batch.pos);
    Var eni = tape.gather_rows(vars.item_final, batch.neg);
    Var gap = tape.sub(tape.rows_dot(eu, epi), tape.rows_dot(eu, eni));
    return tape.scale(tape.sum(tape.logsigmoid(gap)), -1.0);
}

/// Discriminator-side minimax term, generator frozen: the mixture weights P
/// (pairs x m) enter as a constant and beta * -log sigmoid(y_ui - y_u'i) is
/// minimized. Returns the *unscaled* sum of -log sigmoid(gap) too, for the
/// history record.
template <typename T>
std::pair<Var, Var> build_adversarial_term_d(Tape<T>& tape, const DiscTapeVars<T>& vars,
                                             const Tensor<T>& mixture,
                                             const std::vector<std::int64_t>& users,
                                             const std::vector<std::int64_t>& items,
                                             double beta) {
    Var p = tape.constant(mixture);
    Var mixed = tape.matmul(p, vars.user_final);  // pairs x d
    Var ei = tape.gather_rows(vars.item_final, items);
    Var eu = tape.gather_rows(vars.user_final, users);
    Var gap = tape.sub(tape.rows_dot(eu, ei), tape.rows_dot(mixed, ei));
    Var raw = tape.scale(tape.sum(tape.logsigmoid(gap)), -1.0);
    return {tape.scale(raw, beta), raw};
}

// ---------------------------------------------------------------------------
// Frozen-state helpers (evaluation, diagnostics, op-level tests)
// ---------------------------------------------------------------------------

/// Per-layer embeddings of one propagation, extracted from a tape run.
template <typename T>
struct PropagationState {
    std::vector<Tensor<T>> user_layers, item_layers;
    Tensor<T> user_final, item_final;
    std::vector<Tensor<T>> alpha;  // per layer, m x k
};

template <typename T>
PropagationState<T> compute_propagation(const DiscriminatorParams<T>& params,
                                        const DiscGraphConfig<T>& cfg) {
    Tape<T> tape;
    DiscTapeVars<T> vars = build_discriminator_graph(tape, params, cfg);
    PropagationState<T> st;
    for (Var v : vars.user_layers) st.user_layers.push_back(tape.value(v));
    for (Var v : vars.item_layers) st.item_layers.push_back(tape.value(v));
    st.user_final = tape.value(vars.user_final);
    st.item_final = tape.value(vars.item_final);
    for (Var v : vars.alpha) st.alpha.push_back(tape.value(v));
    return st;
}

/// Predicted score: inner product of the final embeddings.
template <typename T>
double score(const PropagationState<T>& state, std::size_t user, std::size_t item) {
    const T* eu = state.user_final.row_ptr(user);
    const T* ei = state.item_final.row_ptr(item);
    double s = 0.0;
    for (std::size_t c = 0; c < state.user_final.cols; ++c)
        s += static_cast<double>(eu[c]) * static_cast<double>(ei[c]);
    return s;
}

/// Eq.-9 attention weights over one user's neighborhood at layer l with an
/// explicit context item. Returns an empty vector for an empty neighborhood
/// (no social propagation).
template <typename T>
std::vector<double> attention_weights(std::size_t user, const std::vector<std::size_t>& neighbors,
                                      std::size_t context_item, std::size_t layer,
                                      const PropagationState<T>& state,
                                      const DiscriminatorParams<T>& params) {
    if (neighbors.empty()) return {};
    const std::size_t d = state.user_final.cols;
    const Tensor<T>& eu_l = state.user_layers[layer];
    const Tensor<T>& ei_l = state.item_layers[layer];
    const std::size_t li = std::min<std::size_t>(layer, params.layer_count() - 1);
    const Tensor<T>& w1 = params.w1[li];
    const Tensor<T>& w2 = params.w2[li];
    const Tensor<T>& q = params.q[li];
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    // context half of the score, shared by all neighbors
    double ctx_part = 0.0;
    for (std::size_t t = 0; t < d; ++t) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c)
            acc += static_cast<double>(ei_l(context_item, c)) * static_cast<double>(w2(c, t));
        ctx_part += static_cast<double>(q.data[d + t]) * sig(acc);
    }
    std::vector<double> scores(neighbors.size());
    for (std::size_t j = 0; j < neighbors.size(); ++j) {
        double s = ctx_part;
        for (std::size_t t = 0; t < d; ++t) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c)
                acc += (static_cast<double>(eu_l(user, c)) +
                        static_cast<double>(eu_l(neighbors[j], c))) *
                       static_cast<double>(w1(c, t));
            s += static_cast<double>(q.data[t]) * sig(acc);
        }
        scores[j] = s;
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double& s : scores) {
        s = std::exp(s - mx);
        sum += s;
    }
    for (double& s : scores) s /= sum;
    return scores;
}

/// -log sigmoid(y_ui - y_uj) over the triples plus lambda ||Phi||^2, from a
/// frozen state (op-level reference; training uses the tape form).
template <typename T>
double bpr_loss(const std::vector<std::array<std::size_t, 3>>& triples,
                const PropagationState<T>& state, const DiscriminatorParams<T>& params,
                double lambda) {
    double loss = 0.0;
    for (const auto& t : triples) {
        const double gap = score(state, t[0], t[1]) - score(state, t[0], t[2]);
        loss -= gap >= 0 ? -std::log1p(std::exp(-gap)) : gap - std::log1p(std::exp(gap));
    }
    double reg = 0.0;
    auto add_sq = [&reg](const Tensor<T>& t) {
        for (T v : t.data) reg += static_cast<double>(v) * static_cast<double>(v);
    };
    add_sq(params.user_e0);
    add_sq(params.item_e0);
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        add_sq(params.q[l]);
        add_sq(params.w1[l]);
        add_sq(params.w2[l]);
    }
    return loss + lambda * reg;
}

/// Relaxation-weighted minimax pair loss -log sigmoid(y_ui - y_u'i), with the
/// generated neighbor score the expectation over the mixture of concrete rows.
template <typename T>
double adversarial_pair_loss(std::size_t user, std::size_t item,
                             const RelaxedSelection<T>& selection,
                             const PropagationState<T>& state) {
    const std::size_t m = selection.v.cols;
    const std::size_t k = selection.v.rows;
    double mixed = 0.0;
    for (std::size_t w = 0; w < m; ++w) {
        double p = 0.0;
        for (std::size_t i = 0; i < k; ++i) p += static_cast<double>(selection.v(i, w));
        if (p != 0.0) mixed += (p / static_cast<double>(k)) * score(state, w, item);
    }
    const double gap = score(state, user, item) - mixed;
    return -(gap >= 0 ? -std::log1p(std::exp(-gap)) : gap - std::log1p(std::exp(gap)));
}

}  // namespace esrf
