#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "esrf/error.hpp"
#include "esrf/rng.hpp"
#include "esrf/sparse.hpp"

namespace esrf {

/// Implicit-feedback log over dense user/item index spaces. Original string
/// labels are kept for round-tripping.
struct InteractionLog {
    std::vector<std::string> user_labels;  // dense index -> original label
    std::vector<std::string> item_labels;
    std::unordered_map<std::string, std::size_t> user_index;
    std::unordered_map<std::string, std::size_t> item_index;
    std::vector<std::pair<std::size_t, std::size_t>> positives;  // (user, item), unique
    SparseMatrix y;  // m x n binary

    std::size_t num_users() const { return user_labels.size(); }
    std::size_t num_items() const { return item_labels.size(); }
};

struct SocialLog {
    SparseMatrix s;  // m x m binary directed, no self-loops
    std::size_t num_relations = 0;
};

/// Per-positive fold assignment of a k-fold split.
struct SplitPlan {
    std::size_t fold_count = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> fold_of;  // parallel to log.positives
};

namespace detail {

inline bool split_fields(const std::string& line, std::vector<std::string>& out) {
    out.clear();
    std::size_t start = 0;
    while (start <= line.size()) {
        std::size_t tab = line.find_first_of("\t ", start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, tab - start));
        // collapse runs of separators
        start = line.find_first_not_of("\t ", tab);
        if (start == std::string::npos) break;
    }
    while (!out.empty() && out.back().empty()) out.pop_back();
    return !out.empty();
}

inline bool parse_real(const std::string& s, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size();
    } catch (...) {
        return false;
    }
}

inline std::string trim_cr(std::string line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    return line;
}

}  // namespace detail

/// Loads `user<TAB>item<TAB>weight` rows. Lines starting with '#' are
/// skipped; `skip_header` drops one leading non-comment line (some published
/// files carry a column-name row). When `rating_threshold` is set, only rows
/// with weight strictly greater than it are kept. Surviving rows are
/// binarized and duplicates collapsed.
inline InteractionLog load_feedback(const std::string& path,
                                    std::optional<double> rating_threshold = std::nullopt,
                                    bool skip_header = false) {
    std::ifstream in(path);
    if (!in) throw InputError("load_feedback: cannot open " + path);
    InteractionLog log;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::string line;
    std::size_t line_no = 0;
    bool header_pending = skip_header;
    std::vector<std::string> fields;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::trim_cr(line);
        if (line.empty() || line[0] == '#') continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        if (!detail::split_fields(line, fields) || fields.size() < 2)
            throw ParseError(path, line_no, "expected user<TAB>item<TAB>weight");
        double weight = 1.0;
        if (fields.size() >= 3 && !detail::parse_real(fields[2], weight))
            throw ParseError(path, line_no, "bad weight '" + fields[2] + "'");
        if (rating_threshold && !(weight > *rating_threshold)) continue;
        auto uit = log.user_index.try_emplace(fields[0], log.user_labels.size());
        if (uit.second) log.user_labels.push_back(fields[0]);
        auto iit = log.item_index.try_emplace(fields[1], log.item_labels.size());
        if (iit.second) log.item_labels.push_back(fields[1]);
        seen.insert({uit.first->second, iit.first->second});
    }
    if (seen.empty()) throw InputError("load_feedback: no usable rows in " + path);
    log.positives.assign(seen.begin(), seen.end());
    std::vector<Triplet> trip;
    trip.reserve(log.positives.size());
    for (auto [u, i] : log.positives) trip.push_back({u, i, 1.0});
    log.y = csr_from_triplets(log.num_users(), log.num_items(), std::move(trip));
    return log;
}

/// Loads `truster<TAB>trustee` rows into a binary directed matrix over the
/// log's user space. Users only present in the trust file are appended to the
/// user space (they shape the motif structure but carry no positives).
/// Self-loops are dropped.
inline SocialLog load_social(const std::string& path, InteractionLog& log,
                             bool skip_header = false) {
    std::ifstream in(path);
    if (!in) throw InputError("load_social: cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    bool header_pending = skip_header;
    std::vector<std::string> fields;
    std::set<std::pair<std::size_t, std::size_t>> edges;
    auto intern_user = [&log](const std::string& label) {
        auto it = log.user_index.try_emplace(label, log.user_labels.size());
        if (it.second) log.user_labels.push_back(label);
        return it.first->second;
    };
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::trim_cr(line);
        if (line.empty() || line[0] == '#') continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        if (!detail::split_fields(line, fields) || fields.size() < 2)
            throw ParseError(path, line_no, "expected truster<TAB>trustee");
        std::size_t a = intern_user(fields[0]);
        std::size_t b = intern_user(fields[1]);
        if (a == b) continue;
        edges.insert({a, b});
    }
    SocialLog social;
    social.num_relations = edges.size();
    std::vector<Triplet> trip;
    trip.reserve(edges.size());
    for (auto [a, b] : edges) trip.push_back({a, b, 1.0});
    social.s = csr_from_triplets(log.num_users(), log.num_users(), std::move(trip));
    // the feedback matrix may need empty rows appended for trust-only users
    if (log.y.n_rows < log.num_users()) {
        log.y.row_offsets.resize(log.num_users() + 1, log.y.row_offsets.back());
        log.y.n_rows = log.num_users();
    }
    return social;
}

/// Per-user stratified k-fold split: each user's positives are shuffled and
/// dealt round-robin across folds, so fold sizes differ by at most one per
/// user. Deterministic under the seed.
inline SplitPlan kfold_split(const InteractionLog& log, std::size_t folds, std::uint64_t seed) {
    if (folds < 2) throw InputError("kfold_split: need at least 2 folds");
    SplitPlan plan;
    plan.fold_count = folds;
    plan.seed = seed;
    plan.fold_of.assign(log.positives.size(), 0);
    std::vector<std::vector<std::size_t>> by_user(log.num_users());
    for (std::size_t p = 0; p < log.positives.size(); ++p)
        by_user[log.positives[p].first].push_back(p);
    Rng rng(seed, /*stream=*/0x5EED5);
    for (std::size_t u = 0; u < by_user.size(); ++u) {
        auto& rows = by_user[u];
        for (std::size_t i = rows.size(); i > 1; --i)
            std::swap(rows[i - 1], rows[rng.uniform_int(i)]);
        const std::size_t start = rng.uniform_int(folds);
        for (std::size_t i = 0; i < rows.size(); ++i)
            plan.fold_of[rows[i]] = (start + i) % folds;
    }
    return plan;
}

/// Positives of every fold except `fold` (the training side).
inline std::vector<std::pair<std::size_t, std::size_t>> train_positives(
    const InteractionLog& log, const SplitPlan& plan, std::size_t fold) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t p = 0; p < log.positives.size(); ++p)
        if (plan.fold_of[p] != fold) out.push_back(log.positives[p]);
    return out;
}

inline std::vector<std::pair<std::size_t, std::size_t>> test_positives(
    const InteractionLog& log, const SplitPlan& plan, std::size_t fold) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t p = 0; p < log.positives.size(); ++p)
        if (plan.fold_of[p] == fold) out.push_back(log.positives[p]);
    return out;
}

/// A training view: positives plus the binary Y over the full index spaces.
struct TrainView {
    std::vector<std::pair<std::size_t, std::size_t>> positives;
    SparseMatrix y;  // m x n binary over the full user/item spaces
    std::size_t num_users = 0;
    std::size_t num_items = 0;

    static TrainView from_positives(std::vector<std::pair<std::size_t, std::size_t>> pos,
                                    std::size_t m, std::size_t n) {
        TrainView v;
        v.positives = std::move(pos);
        v.num_users = m;
        v.num_items = n;
        std::vector<Triplet> trip;
        trip.reserve(v.positives.size());
        for (auto [u, i] : v.positives) trip.push_back({u, i, 1.0});
        v.y = csr_from_triplets(m, n, std::move(trip));
        return v;
    }
};

/// Keeps only interactions of users with strictly fewer than `max_records`
/// records in the view (the cold-start construction).
inline TrainView cold_start_filter(const TrainView& view, std::size_t max_records) {
    if (max_records < 1) throw InputError("cold_start_filter: max_records must be >= 1");
    std::vector<std::size_t> count(view.num_users, 0);
    for (auto [u, i] : view.positives) count[u]++;
    std::vector<std::pair<std::size_t, std::size_t>> kept;
    for (auto [u, i] : view.positives)
        if (count[u] < max_records) kept.push_back({u, i});
    return TrainView::from_positives(std::move(kept), view.num_users, view.num_items);
}

/// Writes `user<TAB>item<TAB>fold` rows (original labels) for reproduction.
inline void write_split_manifest(const std::string& path, const InteractionLog& log,
                                 const SplitPlan& plan) {
    std::ofstream out(path);
    if (!out) throw InputError("write_split_manifest: cannot open " + path);
    out << "# seed=" << plan.seed << " folds=" << plan.fold_count << "\n";
    for (std::size_t p = 0; p < log.positives.size(); ++p) {
        auto [u, i] = log.positives[p];
        out << log.user_labels[u] << '\t' << log.item_labels[i] << '\t' << plan.fold_of[p]
            << '\n';
    }
}

}  // namespace esrf
