#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "esrf/dataset.hpp"

using namespace esrf;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& contents) {
        static int counter = 0;
        path = "esrf_test_tmp_" + std::to_string(counter++) + ".tsv";
        std::ofstream out(path);
        out << contents;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("load_feedback") {
    SECTION("parses rows, binarizes, dedups") {
        TempFile f("u1\ti1\t5\nu1\ti2\t2\nu2\ti1\t1\n# comment\nu1\ti1\t9\n");
        InteractionLog log = load_feedback(f.path);
        CHECK(log.num_users() == 2);
        CHECK(log.num_items() == 2);
        CHECK(log.positives.size() == 3);  // duplicate (u1,i1) collapsed
        CHECK(log.y.at(0, 0) == 1.0);
    }
    SECTION("strict rating threshold") {
        TempFile f("u1\ti1\t3\nu1\ti2\t4\n");
        InteractionLog log = load_feedback(f.path, 3.0);
        CHECK(log.positives.size() == 1);
        CHECK(log.item_labels[0] == "i2");
    }
    SECTION("malformed row raises a parse error with the line number") {
        TempFile f("u1\ti1\t1\nbroken\n");
        try {
            load_feedback(f.path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line_number == 2);
        }
    }
    SECTION("bad weight raises a parse error") {
        TempFile f("u1\ti1\tx\n");
        CHECK_THROWS_AS(load_feedback(f.path), ParseError);
    }
    SECTION("empty result is an input error") {
        TempFile f("# nothing\n");
        CHECK_THROWS_AS(load_feedback(f.path), InputError);
    }
    SECTION("index maps are bijections") {
        TempFile f("a\tx\t1\nb\ty\t1\nc\tx\t1\n");
        InteractionLog log = load_feedback(f.path);
        for (std::size_t u = 0; u < log.num_users(); ++u)
            CHECK(log.user_index.at(log.user_labels[u]) == u);
        for (std::size_t i = 0; i < log.num_items(); ++i)
            CHECK(log.item_index.at(log.item_labels[i]) == i);
    }
    SECTION("round-trip: re-serializing and reloading gives the same matrix") {
        TempFile f("a\tx\t1\nb\ty\t1\nc\tx\t1\nb\tz\t1\n");
        InteractionLog log = load_feedback(f.path);
        std::string dump;
        for (auto [u, i] : log.positives)
            dump += log.user_labels[u] + "\t" + log.item_labels[i] + "\t1\n";
        TempFile f2(dump);
        InteractionLog log2 = load_feedback(f2.path);
        REQUIRE(log2.y.n_rows == log.y.n_rows);
        CHECK(log2.y.col_indices == log.y.col_indices);
        CHECK(log2.y.row_offsets == log.y.row_offsets);
    }
}

TEST_CASE("load_social") {
    SECTION("self-loops dropped, direction kept") {
        TempFile fb("u1\ti1\t1\nu2\ti1\t1\n");
        TempFile ts("u1\tu2\nu2\tu1\nu1\tu1\n");
        InteractionLog log = load_feedback(fb.path);
        SocialLog social = load_social(ts.path, log);
        CHECK(social.num_relations == 2);
        CHECK(social.s.at(0, 1) == 1.0);
        CHECK(social.s.at(1, 0) == 1.0);
        CHECK(social.s.at(0, 0) == 0.0);
    }
    SECTION("one-way relation is a single directed entry") {
        TempFile fb("u1\ti1\t1\nu2\ti1\t1\n");
        TempFile ts("u1\tu2\n");
        InteractionLog log = load_feedback(fb.path);
        SocialLog social = load_social(ts.path, log);
        CHECK(social.s.at(0, 1) == 1.0);
        CHECK(social.s.at(1, 0) == 0.0);
    }
    SECTION("trust-only users are appended to the user space") {
        TempFile fb("u1\ti1\t1\n");
        TempFile ts("u1\tu9\n");
        InteractionLog log = load_feedback(fb.path);
        SocialLog social = load_social(ts.path, log);
        CHECK(log.num_users() == 2);
        CHECK(log.y.n_rows == 2);   // empty feedback row appended
        CHECK(social.s.n_rows == 2);
    }
    SECTION("malformed row raises a parse error") {
        TempFile fb("u1\ti1\t1\n");
        TempFile ts("justone\n");
        InteractionLog log = load_feedback(fb.path);
        CHECK_THROWS_AS(load_social(ts.path, log), ParseError);
    }
}

TEST_CASE("kfold_split") {
    std::string rows;
    for (int i = 0; i < 10; ++i) rows += "u\ti" + std::to_string(i) + "\t1\n";
    TempFile f(rows);
    InteractionLog log = load_feedback(f.path);

    SECTION("10 positives over 5 folds gives 2 per fold") {
        SplitPlan plan = kfold_split(log, 5, 99);
        std::vector<int> counts(5, 0);
        for (std::size_t fold : plan.fold_of) counts[fold]++;
        for (int c : counts) CHECK(c == 2);
    }
    SECTION("folds partition the positives") {
        SplitPlan plan = kfold_split(log, 5, 3);
        for (std::size_t fold = 0; fold < 5; ++fold) {
            auto train = train_positives(log, plan, fold);
            auto test = test_positives(log, plan, fold);
            CHECK(train.size() + test.size() == log.positives.size());
            for (const auto& t : test)
                CHECK(std::find(train.begin(), train.end(), t) == train.end());
        }
    }
    SECTION("same seed twice gives the identical assignment") {
        CHECK(kfold_split(log, 5, 42).fold_of == kfold_split(log, 5, 42).fold_of);
    }
    SECTION("a user with fewer positives than folds never gets duplicates") {
        TempFile small("u\ta\t1\nu\tb\t1\nu\tc\t1\n");
        InteractionLog slog = load_feedback(small.path);
        SplitPlan plan = kfold_split(slog, 5, 1);
        std::vector<int> counts(5, 0);
        for (std::size_t fold : plan.fold_of) counts[fold]++;
        for (int c : counts) CHECK(c <= 1);
    }
    SECTION("fewer than 2 folds is an input error") {
        CHECK_THROWS_AS(kfold_split(log, 1, 0), InputError);
    }
}

TEST_CASE("cold_start_filter") {
    std::vector<std::pair<std::size_t, std::size_t>> pos;
    for (std::size_t i = 0; i < 19; ++i) pos.push_back({0, i});  // 19 records: kept
    for (std::size_t i = 0; i < 20; ++i) pos.push_back({1, i});  // 20 records: removed
    pos.push_back({2, 0});
    TrainView view = TrainView::from_positives(pos, 3, 25);

    TrainView cold = cold_start_filter(view, 20);
    std::vector<std::size_t> users;
    for (auto [u, i] : cold.positives) users.push_back(u);
    CHECK(std::count(users.begin(), users.end(), 0) == 19);
    CHECK(std::count(users.begin(), users.end(), 1) == 0);
    CHECK(std::count(users.begin(), users.end(), 2) == 1);

    SECTION("retained share matches a per-user histogram scan") {
        Rng rng(4);
        std::vector<std::pair<std::size_t, std::size_t>> rpos;
        for (std::size_t u = 0; u < 40; ++u) {
            const std::size_t cnt = 1 + rng.uniform_int(30);
            for (std::size_t i = 0; i < cnt; ++i) rpos.push_back({u, (u * 31 + i) % 200});
        }
        TrainView rview = TrainView::from_positives(rpos, 40, 200);
        TrainView rcold = cold_start_filter(rview, 12);
        std::vector<std::size_t> hist(40, 0);
        for (auto [u, i] : rview.positives) hist[u]++;
        std::size_t want = 0;
        for (auto [u, i] : rview.positives)
            if (hist[u] < 12) want++;
        CHECK(rcold.positives.size() == want);
    }
    SECTION("max_records below 1 is an input error") {
        CHECK_THROWS_AS(cold_start_filter(view, 0), InputError);
    }
}

TEST_CASE("split manifest") {
    TempFile f("a\tx\t1\nb\ty\t1\nb\tz\t1\na\tz\t1\n");
    InteractionLog log = load_feedback(f.path);
    SplitPlan plan = kfold_split(log, 2, 5);
    write_split_manifest("esrf_test_manifest.tsv", log, plan);
    std::ifstream in("esrf_test_manifest.tsv");
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("# seed=5", 0) == 0);
    std::size_t rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) rows++;
    CHECK(rows == log.positives.size());
    std::remove("esrf_test_manifest.tsv");
}
