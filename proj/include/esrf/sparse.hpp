#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "esrf/error.hpp"

namespace esrf {

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Compressed sparse row matrix of non-negative real weights.
/// Invariants: row_offsets has n_rows+1 monotone entries, column indices are
/// strictly increasing within each row, and no explicit zeros are stored.
struct SparseMatrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<std::size_t> row_offsets;  // size n_rows + 1
    std::vector<std::size_t> col_indices;
    std::vector<double> values;

    SparseMatrix() : row_offsets(1, 0) {}
    SparseMatrix(std::size_t r, std::size_t c) : n_rows(r), n_cols(c), row_offsets(r + 1, 0) {}

    std::size_t nnz() const { return col_indices.size(); }

    std::size_t row_begin(std::size_t r) const { return row_offsets[r]; }
    std::size_t row_end(std::size_t r) const { return row_offsets[r + 1]; }

    double at(std::size_t r, std::size_t c) const {
        for (std::size_t p = row_begin(r); p < row_end(r); ++p)
            if (col_indices[p] == c) return values[p];
        return 0.0;
    }

    bool square() const { return n_rows == n_cols; }

    bool binary() const {
        return std::all_of(values.begin(), values.end(), [](double v) { return v == 1.0; });
    }
};

/// Builds canonical CSR from (row, col, weight) triplets; duplicates are
/// summed, entries that cancel to zero are dropped.
inline SparseMatrix csr_from_triplets(std::size_t rows, std::size_t cols,
                                      std::vector<Triplet> entries) {
    for (const auto& t : entries) {
        if (t.row >= rows || t.col >= cols)
            throw InputError("triplet out of range: (" + std::to_string(t.row) + ", " +
                             std::to_string(t.col) + ", " + std::to_string(t.value) +
                             ") for a " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " matrix");
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    SparseMatrix m(rows, cols);
    std::size_t i = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        while (i < entries.size() && entries[i].row == r) {
            std::size_t c = entries[i].col;
            double v = 0.0;
            while (i < entries.size() && entries[i].row == r && entries[i].col == c)
                v += entries[i++].value;
            if (v != 0.0) {
                m.col_indices.push_back(c);
                m.values.push_back(v);
            }
        }
        m.row_offsets[r + 1] = m.col_indices.size();
    }
    return m;
}

inline SparseMatrix transpose(const SparseMatrix& a) {
    SparseMatrix t(a.n_cols, a.n_rows);
    std::vector<std::size_t> counts(a.n_cols, 0);
    for (std::size_t c : a.col_indices) counts[c]++;
    t.row_offsets.assign(a.n_cols + 1, 0);
    std::partial_sum(counts.begin(), counts.end(), t.row_offsets.begin() + 1);
    t.col_indices.resize(a.nnz());
    t.values.resize(a.nnz());
    std::vector<std::size_t> cursor(t.row_offsets.begin(), t.row_offsets.end() - 1);
    for (std::size_t r = 0; r < a.n_rows; ++r) {
        for (std::size_t p = a.row_begin(r); p < a.row_end(r); ++p) {
            std::size_t dst = cursor[a.col_indices[p]]++;
            t.col_indices[dst] = r;
            t.values[dst] = a.values[p];
        }
    }
    return t;
}

/// Entrywise sum; shapes must match.
inline SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b) {
    if (a.n_rows != b.n_rows || a.n_cols != b.n_cols)
        throw InputError("sparse add: shape mismatch");
    SparseMatrix out(a.n_rows, a.n_cols);
    for (std::size_t r = 0; r < a.n_rows; ++r) {
        std::size_t pa = a.row_begin(r), pb = b.row_begin(r);
        const std::size_t ea = a.row_end(r), eb = b.row_end(r);
        while (pa < ea || pb < eb) {
            std::size_t ca = pa < ea ? a.col_indices[pa] : a.n_cols;
            std::size_t cb = pb < eb ? b.col_indices[pb] : a.n_cols;
            if (ca < cb) {
                out.col_indices.push_back(ca);
                out.values.push_back(a.values[pa++]);
            } else if (cb < ca) {
                out.col_indices.push_back(cb);
                out.values.push_back(b.values[pb++]);
            } else {
                double v = a.values[pa++] + b.values[pb++];
                if (v != 0.0) {
                    out.col_indices.push_back(ca);
                    out.values.push_back(v);
                }
            }
        }
        out.row_offsets[r + 1] = out.col_indices.size();
    }
    return out;
}

/// Splits a binary directed adjacency into bidirectional (B = S o S^T) and
/// unidirectional (S - B) parts.
inline std::pair<SparseMatrix, SparseMatrix> split_bidirectional(const SparseMatrix& s) {
    if (!s.square()) throw InputError("split_bidirectional: matrix must be square");
    if (!s.binary()) throw InputError("split_bidirectional: matrix must be binary");
    const SparseMatrix st = transpose(s);
    std::vector<Triplet> b_entries, u_entries;
    for (std::size_t r = 0; r < s.n_rows; ++r) {
        for (std::size_t p = s.row_begin(r); p < s.row_end(r); ++p) {
            std::size_t c = s.col_indices[p];
            if (st.at(r, c) != 0.0)
                b_entries.push_back({r, c, 1.0});
            else
                u_entries.push_back({r, c, 1.0});
        }
    }
    return {csr_from_triplets(s.n_rows, s.n_cols, std::move(b_entries)),
            csr_from_triplets(s.n_rows, s.n_cols, std::move(u_entries))};
}

/// (P Q) o T with T supplying both the sparsity mask and an entrywise factor:
/// out(i,j) = T(i,j) * sum_p P(i,p) Q(p,j). Rows of P Q are accumulated only
/// where T has entries (Gustavson with row skip); the full product is never
/// materialized.
inline SparseMatrix masked_sparse_product(const SparseMatrix& p, const SparseMatrix& q,
                                          const SparseMatrix& t) {
    if (p.n_cols != q.n_rows || t.n_rows != p.n_rows || t.n_cols != q.n_cols)
        throw InputError("masked_sparse_product: dimension mismatch");
    SparseMatrix out(t.n_rows, t.n_cols);
    std::vector<double> acc(q.n_cols, 0.0);
    for (std::size_t r = 0; r < t.n_rows; ++r) {
        if (t.row_begin(r) == t.row_end(r)) {
            out.row_offsets[r + 1] = out.col_indices.size();
            continue;
        }
        for (std::size_t pp = p.row_begin(r); pp < p.row_end(r); ++pp) {
            const std::size_t k = p.col_indices[pp];
            const double pv = p.values[pp];
            for (std::size_t pq = q.row_begin(k); pq < q.row_end(k); ++pq)
                acc[q.col_indices[pq]] += pv * q.values[pq];
        }
        for (std::size_t pt = t.row_begin(r); pt < t.row_end(r); ++pt) {
            const std::size_t c = t.col_indices[pt];
            const double v = t.values[pt] * acc[c];
            if (v != 0.0) {
                out.col_indices.push_back(c);
                out.values.push_back(v);
            }
        }
        // reset only the touched slots
        for (std::size_t pp = p.row_begin(r); pp < p.row_end(r); ++pp) {
            const std::size_t k = p.col_indices[pp];
            for (std::size_t pq = q.row_begin(k); pq < q.row_end(k); ++pq)
                acc[q.col_indices[pq]] = 0.0;
        }
        out.row_offsets[r + 1] = out.col_indices.size();
    }
    return out;
}

/// Plain sparse product P Q (used where no mask applies).
inline SparseMatrix sparse_product(const SparseMatrix& p, const SparseMatrix& q) {
    if (p.n_cols != q.n_rows) throw InputError("sparse_product: dimension mismatch");
    SparseMatrix out(p.n_rows, q.n_cols);
    std::vector<double> acc(q.n_cols, 0.0);
    std::vector<std::size_t> touched;
    for (std::size_t r = 0; r < p.n_rows; ++r) {
        touched.clear();
        for (std::size_t pp = p.row_begin(r); pp < p.row_end(r); ++pp) {
            const std::size_t k = p.col_indices[pp];
            const double pv = p.values[pp];
            for (std::size_t pq = q.row_begin(k); pq < q.row_end(k); ++pq) {
                const std::size_t c = q.col_indices[pq];
                if (acc[c] == 0.0) touched.push_back(c);
                acc[c] += pv * q.values[pq];
            }
        }
        std::sort(touched.begin(), touched.end());
        for (std::size_t c : touched) {
            if (acc[c] != 0.0) {
                out.col_indices.push_back(c);
                out.values.push_back(acc[c]);
            }
            acc[c] = 0.0;
        }
        out.row_offsets[r + 1] = out.col_indices.size();
    }
    return out;
}

inline SparseMatrix zero_diagonal(const SparseMatrix& a) {
    SparseMatrix out(a.n_rows, a.n_cols);
    for (std::size_t r = 0; r < a.n_rows; ++r) {
        for (std::size_t p = a.row_begin(r); p < a.row_end(r); ++p) {
            if (a.col_indices[p] != r) {
                out.col_indices.push_back(a.col_indices[p]);
                out.values.push_back(a.values[p]);
            }
        }
        out.row_offsets[r + 1] = out.col_indices.size();
    }
    return out;
}

/// Keeps entries with value strictly greater than the threshold.
inline SparseMatrix filter_greater(const SparseMatrix& a, double threshold) {
    SparseMatrix out(a.n_rows, a.n_cols);
    for (std::size_t r = 0; r < a.n_rows; ++r) {
        for (std::size_t p = a.row_begin(r); p < a.row_end(r); ++p) {
            if (a.values[p] > threshold) {
                out.col_indices.push_back(a.col_indices[p]);
                out.values.push_back(a.values[p]);
            }
        }
        out.row_offsets[r + 1] = out.col_indices.size();
    }
    return out;
}

inline SparseMatrix binarize(const SparseMatrix& a) {
    SparseMatrix out = a;
    for (auto& v : out.values) v = 1.0;
    return out;
}

inline bool is_symmetric(const SparseMatrix& a, double tol = 0.0) {
    if (!a.square()) return false;
    const SparseMatrix t = transpose(a);
    if (t.nnz() != a.nnz()) return false;
    for (std::size_t i = 0; i < a.nnz(); ++i)
        if (t.col_indices[i] != a.col_indices[i] || std::abs(t.values[i] - a.values[i]) > tol)
            return false;
    return a.row_offsets == t.row_offsets;
}

}  // namespace esrf
