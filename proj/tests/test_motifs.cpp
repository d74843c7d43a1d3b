#include <catch2/catch_amalgamated.hpp>

#include "esrf/motifs.hpp"
#include "esrf/rng.hpp"
#include "motif_oracle.hpp"

using namespace esrf;

namespace {

SparseMatrix from_triplets(std::size_t r, std::size_t c, std::vector<Triplet> t) {
    return csr_from_triplets(r, c, std::move(t));
}

SparseMatrix random_directed(std::size_t n, double density, Rng& rng) {
    std::vector<Triplet> trip;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && rng.uniform() < density) trip.push_back({i, j, 1.0});
    return csr_from_triplets(n, n, trip);
}

SparseMatrix random_bipartite(std::size_t m, std::size_t n, double density, Rng& rng) {
    std::vector<Triplet> trip;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (rng.uniform() < density) trip.push_back({i, j, 1.0});
    return csr_from_triplets(m, n, trip);
}

}  // namespace

TEST_CASE("directed 3-cycle forms one M1 instance per pair") {
    SparseMatrix s = from_triplets(3, 3, {{0, 1, 1}, {1, 2, 1}, {2, 0, 1}});
    SparseMatrix y(3, 1);
    SparseMatrix a = motif_adjacency(s, y, 1);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(a.at(i, j) == (i == j ? 0.0 : 1.0));
}

TEST_CASE("mutual pair with a shared item forms one M8 instance") {
    // users 0,1 mutually connected, both consuming item 0
    SparseMatrix s = from_triplets(2, 2, {{0, 1, 1}, {1, 0, 1}});
    SparseMatrix y = from_triplets(2, 1, {{0, 0, 1}, {1, 0, 1}});
    SparseMatrix a = motif_adjacency(s, y, 8);
    CHECK(a.at(0, 1) == 1.0);
    CHECK(a.at(1, 0) == 1.0);
}

TEST_CASE("M10 keeps only counts strictly greater than 5") {
    SparseMatrix s(2, 2);  // no social edges
    std::vector<Triplet> trip;
    for (std::size_t i = 0; i < 5; ++i) {
        trip.push_back({0, i, 1.0});
        trip.push_back({1, i, 1.0});
    }
    SparseMatrix y5 = from_triplets(2, 6, trip);
    CHECK(motif_adjacency(s, y5, 10).nnz() == 0);

    trip.push_back({0, 5, 1.0});
    trip.push_back({1, 5, 1.0});
    SparseMatrix y6 = from_triplets(2, 6, trip);
    SparseMatrix a = motif_adjacency(s, y6, 10);
    CHECK(a.at(0, 1) == 6.0);
    CHECK(a.at(1, 0) == 6.0);
}

TEST_CASE("unknown motif id is an input error") {
    SparseMatrix s(2, 2), y(2, 2);
    CHECK_THROWS_AS(motif_adjacency(s, y, 11), InputError);
    CHECK_THROWS_AS(motif_adjacency(s, y, 0), InputError);
}

TEST_CASE("all ten motif computations match brute-force triple enumeration") {
    Rng rng(4242);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t m = 4 + rng.uniform_int(10);
        const std::size_t n = 2 + rng.uniform_int(8);
        SparseMatrix s = random_directed(m, 0.25, rng);
        SparseMatrix y = random_bipartite(m, n, 0.4, rng);
        for (int motif = 1; motif <= 10; ++motif) {
            SparseMatrix got = motif_adjacency(s, y, motif, /*m10_threshold=*/2.0);
            auto want = testing::brute_force_motif(s, y, motif, 2.0);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    INFO("motif " << motif << " entry (" << i << "," << j << ")");
                    REQUIRE(got.at(i, j) == want[i][j]);
                }
        }
    }
}

TEST_CASE("finalized motif matrices are symmetric") {
    Rng rng(77);
    SparseMatrix s = random_directed(15, 0.2, rng);
    SparseMatrix y = random_bipartite(15, 8, 0.3, rng);
    MotifSet set = combined_adjacency(s, y, false, 1.0);
    for (const auto& a : set.motif_matrices) CHECK(is_symmetric(a));
}

TEST_CASE("combined adjacency row normalization") {
    SECTION("isolated user becomes a one-hot self row") {
        // user 2 has no edges and no items
        SparseMatrix s = from_triplets(3, 3, {{0, 1, 1}, {1, 0, 1}});
        SparseMatrix y = from_triplets(3, 2, {{0, 0, 1}, {1, 0, 1}});
        MotifSet set = combined_adjacency(s, y);
        CHECK(set.normalized.at(2, 2) == 1.0);
        CHECK(set.normalized.row_end(2) - set.normalized.row_begin(2) == 1);
    }
    SECTION("rows are normalized by their sum") {
        SparseMatrix combined = from_triplets(2, 2, {{0, 0, 3}, {0, 1, 1}});
        SparseMatrix norm = row_normalize_with_self_loops(combined);
        CHECK(norm.at(0, 0) == 0.75);
        CHECK(norm.at(0, 1) == 0.25);
    }
    SECTION("every row sums to 1 on random input") {
        Rng rng(11);
        SparseMatrix s = random_directed(20, 0.15, rng);
        SparseMatrix y = random_bipartite(20, 10, 0.25, rng);
        MotifSet set = combined_adjacency(s, y);
        for (std::size_t r = 0; r < 20; ++r) {
            double sum = 0;
            for (std::size_t p = set.normalized.row_begin(r); p < set.normalized.row_end(r); ++p)
                sum += set.normalized.values[p];
            REQUIRE(std::abs(sum - 1.0) <= 1e-9);
        }
    }
    SECTION("dimension mismatch is an input error") {
        SparseMatrix s(3, 3);
        SparseMatrix y(2, 2);
        CHECK_THROWS_AS(combined_adjacency(s, y), InputError);
    }
}
