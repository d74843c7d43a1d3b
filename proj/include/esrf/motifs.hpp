#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "esrf/sparse.hpp"

namespace esrf {

// Triangular motif catalogue. M1-M7 are social triangles over the directed
// user graph, M8-M10 are user-user-item triads. Each motif-induced adjacency
// counts, per user pair, the instances of the motif both users appear in.
//
//   id   pattern (pair states)                       computation
//   M1   a->b->c->a, all one-way                     C = (UU) o U^T        C+C^T
//   M2   one mutual edge, cyclic one-way rest        C = (BU) o U^T + (UB) o U^T + (UU) o B   C+C^T
//   M3   two mutual edges, one one-way               C = (BB) o U + (BU) o B + (UB) o B       C+C^T
//   M4   all three edges mutual                      C = (BB) o B          C
//   M5   a->b, b->c, a->c (feed-forward)             C = (UU) o U + (UU^T) o U + (U^T U) o U  C+C^T
//   M6   mutual pair, third points at both           C = (UB) o U + (BU^T) o U^T + (U^T U) o B  C
//   M7   mutual pair, both point at third            C = (U^T B) o U^T + (BU) o U + (UU^T) o B  C
//   M8   mutual pair sharing an item                 C = (YY^T) o B        C
//   M9   one-way pair sharing an item                C = (YY^T) o U        C+C^T
//   M10  any pair sharing items (kept if count > 5)  C = YY^T              C
//
// B = S o S^T (mutual links), U = S - B (one-way links).

struct MotifSet {
    std::array<SparseMatrix, 10> motif_matrices;  // indexed M1..M10 as [0..9]
    SparseMatrix combined;    // S + sum of motif matrices
    SparseMatrix normalized;  // row-stochastic D^-1 (combined, isolated rows get a self-loop)
};

constexpr double kM10Threshold = 5.0;  // keep entries strictly greater than this

namespace detail {

inline SparseMatrix motif_from_parts(const SparseMatrix& b, const SparseMatrix& u,
                                     const SparseMatrix& y, int motif_id,
                                     double m10_threshold) {
    const auto mask_prod = masked_sparse_product;
    SparseMatrix c;
    bool symmetric = false;
    switch (motif_id) {
        case 1:
            c = mask_prod(u, u, transpose(u));
            break;
        case 2:
            c = add(add(mask_prod(b, u, transpose(u)), mask_prod(u, b, transpose(u))),
                    mask_prod(u, u, b));
            break;
        case 3:
            c = add(add(mask_prod(b, b, u), mask_prod(b, u, b)), mask_prod(u, b, b));
            break;
        case 4:
            c = mask_prod(b, b, b);
            symmetric = true;
            break;
        case 5:
            c = add(add(mask_prod(u, u, u), mask_prod(u, transpose(u), u)),
                    mask_prod(transpose(u), u, u));
            break;
        case 6:
            c = add(add(mask_prod(u, b, u), mask_prod(b, transpose(u), transpose(u))),
                    mask_prod(transpose(u), u, b));
            symmetric = true;
            break;
        case 7:
            c = add(add(mask_prod(transpose(u), b, transpose(u)), mask_prod(b, u, u)),
                    mask_prod(u, transpose(u), b));
            symmetric = true;
            break;
        case 8:
            c = mask_prod(y, transpose(y), b);
            symmetric = true;
            break;
        case 9:
            c = mask_prod(y, transpose(y), u);
            break;
        case 10:
            c = filter_greater(sparse_product(y, transpose(y)), m10_threshold);
            symmetric = true;
            break;
        default:
            throw InputError("motif_adjacency: unknown motif id " + std::to_string(motif_id));
    }
    if (!symmetric) c = add(c, transpose(c));
    return zero_diagonal(c);
}

}  // namespace detail

/// Motif-induced adjacency for one motif (id in 1..10). S is the binary
/// directed social matrix, Y the binary feedback matrix; Y participates only
/// in M8-M10.
inline SparseMatrix motif_adjacency(const SparseMatrix& s, const SparseMatrix& y, int motif_id,
                                    double m10_threshold = kM10Threshold) {
    if (!s.square()) throw InputError("motif_adjacency: S must be square");
    if (y.n_rows != s.n_rows) throw InputError("motif_adjacency: Y row count must match S");
    auto [b, u] = split_bidirectional(s);
    return detail::motif_from_parts(b, u, y, motif_id, m10_threshold);
}

/// Row-normalizes `combined`, giving rows that are empty in `combined` a unit
/// self-loop first so every row of the result sums to 1.
inline SparseMatrix row_normalize_with_self_loops(const SparseMatrix& combined) {
    SparseMatrix out(combined.n_rows, combined.n_cols);
    for (std::size_t r = 0; r < combined.n_rows; ++r) {
        double sum = 0.0;
        for (std::size_t p = combined.row_begin(r); p < combined.row_end(r); ++p)
            sum += combined.values[p];
        if (sum == 0.0) {
            out.col_indices.push_back(r);
            out.values.push_back(1.0);
        } else {
            for (std::size_t p = combined.row_begin(r); p < combined.row_end(r); ++p) {
                out.col_indices.push_back(combined.col_indices[p]);
                out.values.push_back(combined.values[p] / sum);
            }
        }
        out.row_offsets[r + 1] = out.col_indices.size();
    }
    return out;
}

/// Builds all ten motif matrices plus the combined and normalized generator
/// adjacency. `binarize_motifs` collapses instance counts to 0/1 before the
/// sum (comparison mode; counts are the default).
inline MotifSet combined_adjacency(const SparseMatrix& s, const SparseMatrix& y,
                                   bool binarize_motifs = false,
                                   double m10_threshold = kM10Threshold) {
    if (!s.square()) throw InputError("combined_adjacency: S must be square");
    if (y.n_rows != s.n_rows) throw InputError("combined_adjacency: Y row count must match S");
    MotifSet set;
    auto [b, u] = split_bidirectional(s);
    SparseMatrix total = s;
    for (int id = 1; id <= 10; ++id) {
        SparseMatrix a = detail::motif_from_parts(b, u, y, id, m10_threshold);
        if (binarize_motifs) a = binarize(a);
        total = add(total, a);
        set.motif_matrices[id - 1] = std::move(a);
    }
    set.combined = std::move(total);
    set.normalized = row_normalize_with_self_loops(set.combined);
    return set;
}

/// Combined adjacency from the social matrix alone (motif ablation).
inline MotifSet social_only_adjacency(const SparseMatrix& s) {
    MotifSet set;
    for (auto& m : set.motif_matrices) m = SparseMatrix(s.n_rows, s.n_cols);
    set.combined = s;
    set.normalized = row_normalize_with_self_loops(set.combined);
    return set;
}

}  // namespace esrf
