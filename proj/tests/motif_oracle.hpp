// Test-only brute-force motif counting, independent of the Table-1 matrix
// route: enumerate node triples, classify the induced pair states, and count
// instances directly.
#pragma once

#include <cstddef>
#include <vector>

#include "esrf/sparse.hpp"

namespace esrf::testing {

enum class PairState { kNone, kFwd, kRev, kBi };

inline PairState pair_state(const std::vector<std::vector<bool>>& adj, std::size_t a,
                            std::size_t b) {
    const bool f = adj[a][b], r = adj[b][a];
    if (f && r) return PairState::kBi;
    if (f) return PairState::kFwd;
    if (r) return PairState::kRev;
    return PairState::kNone;
}

// Labeled patterns over (s_ab, s_bc, s_ac) for the social motifs M1-M7.
inline bool matches_labeled(int motif, PairState ab, PairState bc, PairState ac) {
    using P = PairState;
    switch (motif) {
        case 1:  // a->b->c->a
            return ab == P::kFwd && bc == P::kFwd && ac == P::kRev;
        case 2:  // a<->b, a->c->b
            return ab == P::kBi && ac == P::kFwd && bc == P::kRev;
        case 3:  // a<->c<->b, a->b
            return ac == P::kBi && bc == P::kBi && ab == P::kFwd;
        case 4:  // all mutual
            return ab == P::kBi && bc == P::kBi && ac == P::kBi;
        case 5:  // a->b, b->c, a->c
            return ab == P::kFwd && bc == P::kFwd && ac == P::kFwd;
        case 6:  // a<->b, c->a, c->b
            return ab == P::kBi && ac == P::kRev && bc == P::kRev;
        case 7:  // a<->b, a->c, b->c
            return ab == P::kBi && ac == P::kFwd && bc == P::kFwd;
        default:
            return false;
    }
}

inline bool triple_is_motif(int motif, const std::vector<std::vector<bool>>& adj, std::size_t x,
                            std::size_t y, std::size_t z) {
    const std::size_t perm[6][3] = {{x, y, z}, {x, z, y}, {y, x, z},
                                    {y, z, x}, {z, x, y}, {z, y, x}};
    for (const auto& p : perm) {
        if (matches_labeled(motif, pair_state(adj, p[0], p[1]), pair_state(adj, p[1], p[2]),
                            pair_state(adj, p[0], p[2])))
            return true;
    }
    return false;
}

/// Counts, for every user pair, the motif instances both users appear in.
/// Returns a dense m x m matrix. For M8-M10 the third node ranges over items.
inline std::vector<std::vector<double>> brute_force_motif(const SparseMatrix& s,
                                                          const SparseMatrix& y, int motif,
                                                          double m10_threshold = 5.0) {
    const std::size_t m = s.n_rows;
    std::vector<std::vector<bool>> adj(m, std::vector<bool>(m, false));
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t p = s.row_begin(r); p < s.row_end(r); ++p)
            adj[r][s.col_indices[p]] = true;
    std::vector<std::vector<bool>> owns(m, std::vector<bool>(y.n_cols, false));
    for (std::size_t r = 0; r < y.n_rows; ++r)
        for (std::size_t p = y.row_begin(r); p < y.row_end(r); ++p)
            owns[r][y.col_indices[p]] = true;

    std::vector<std::vector<double>> count(m, std::vector<double>(m, 0.0));
    if (motif <= 7) {
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a + 1; b < m; ++b)
                for (std::size_t c = b + 1; c < m; ++c) {
                    if (!triple_is_motif(motif, adj, a, b, c)) continue;
                    count[a][b] += 1;
                    count[b][a] += 1;
                    count[a][c] += 1;
                    count[c][a] += 1;
                    count[b][c] += 1;
                    count[c][b] += 1;
                }
        return count;
    }
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) {
            if (a == b) continue;
            const PairState st = pair_state(adj, a, b);
            bool pair_ok = false;
            if (motif == 8) pair_ok = st == PairState::kBi;
            if (motif == 9) pair_ok = st == PairState::kFwd;  // C counts the edge direction
            if (motif == 10) pair_ok = true;
            if (!pair_ok) continue;
            double shared = 0;
            for (std::size_t i = 0; i < y.n_cols; ++i)
                if (owns[a][i] && owns[b][i]) shared += 1;
            if (motif == 10 && !(shared > m10_threshold)) shared = 0;
            count[a][b] = shared;
        }
    if (motif == 9) {
        // instances symmetrized the way C + C^T is: count once per unordered
        // pair then mirror
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a + 1; b < m; ++b) {
                const double v = count[a][b] + count[b][a];
                count[a][b] = count[b][a] = v;
            }
    }
    return count;
}

}  // namespace esrf::testing
