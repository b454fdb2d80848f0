#include <doctest.h>

#include "mot/assoc.hpp"
#include "mot/checks.hpp"
#include "mot/rng.hpp"

using namespace mot;

TEST_CASE("hungarian on small hand cases") {
    Matching m = hungarian({{0, 1}, {1, 0}});
    REQUIRE(m.pairs.size() == 2);
    CHECK(m.pairs[0] == std::pair{0, 0});
    CHECK(m.pairs[1] == std::pair{1, 1});
    CHECK(m.total_score == 0.0);

    Matching r = hungarian({{5, 2, 9}});
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0] == std::pair{0, 1});
    CHECK(r.unmatched_cols == std::vector<int>{0, 2});
    CHECK(r.unmatched_rows.empty());
}

TEST_CASE("hungarian handles empty matrices") {
    Matching m = hungarian({});
    CHECK(m.pairs.empty());
    Matching n = hungarian({{}, {}});
    CHECK(n.pairs.empty());
    CHECK(n.unmatched_rows == std::vector<int>{0, 1});
}

TEST_CASE("hungarian equals the brute-force optimum on random matrices") {
    Rng rng(42);
    for (int trial = 0; trial < 500; ++trial) {
        int m = static_cast<int>(rng.uniform_int(1, 5));
        int n = static_cast<int>(rng.uniform_int(1, 5));
        Matrix cost(m, std::vector<double>(n));
        for (auto& row : cost)
            for (double& v : row) v = rng.uniform(0.0, 10.0);
        CHECK(hungarian(cost).total_score == brute_force_assignment_cost(cost));
    }
}

TEST_CASE("hungarian pairing is invariant to row/column offsets") {
    Rng rng(43);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix cost(4, std::vector<double>(4));
        for (auto& row : cost)
            for (double& v : row) v = rng.uniform(0.0, 10.0);
        Matching base = hungarian(cost);

        Matrix shifted = cost;
        int r = static_cast<int>(rng.uniform_int(0, 3));
        int c = static_cast<int>(rng.uniform_int(0, 3));
        for (int j = 0; j < 4; ++j) shifted[r][j] += 3.7;
        for (int i = 0; i < 4; ++i) shifted[i][c] += 1.9;
        CHECK(hungarian(shifted).pairs == base.pairs);
    }
}

TEST_CASE("hungarian breaks ties toward the smallest (row, col) assignment") {
    // every assignment costs 2: the lexicographically least must win
    Matching m = hungarian({{1, 1}, {1, 1}});
    REQUIRE(m.pairs.size() == 2);
    CHECK(m.pairs[0] == std::pair{0, 0});
    CHECK(m.pairs[1] == std::pair{1, 1});
}

TEST_CASE("fuse_similarity blends the two matrices") {
    Matrix app = {{0.8}};
    Matrix iou = {{0.4}};
    CHECK(fuse_similarity(app, iou, 0.0)[0][0] == 0.4);
    CHECK(fuse_similarity(app, iou, 1.0)[0][0] == 0.8);
    CHECK(fuse_similarity(app, iou, 0.5)[0][0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK_THROWS_AS(fuse_similarity(app, {{0.1, 0.2}}, 0.5), std::invalid_argument);
}

TEST_CASE("match_with_threshold applies the acceptance gate") {
    Matching none = match_with_threshold({{0.0, 0.0}, {0.0, 0.0}}, 0.3);
    CHECK(none.pairs.empty());
    CHECK(none.unmatched_rows.size() == 2);
    CHECK(none.unmatched_cols.size() == 2);

    Matching one = match_with_threshold({{0.9}}, 0.3);
    REQUIRE(one.pairs.size() == 1);
    CHECK(one.pairs[0] == std::pair{0, 0});

    // optimal assignment keeps (0,0)+(1,1); (1,1) is then below the gate
    Matching gated = match_with_threshold({{0.9, 0.2}, {0.2, 0.25}}, 0.3);
    REQUIRE(gated.pairs.size() == 1);
    CHECK(gated.pairs[0] == std::pair{0, 0});
    CHECK(gated.unmatched_rows == std::vector<int>{1});
    CHECK(gated.unmatched_cols == std::vector<int>{1});
}

TEST_CASE("match_with_threshold never keeps a pair below the gate") {
    Rng rng(44);
    for (int trial = 0; trial < 100; ++trial) {
        int m = static_cast<int>(rng.uniform_int(1, 6));
        int n = static_cast<int>(rng.uniform_int(1, 6));
        Matrix s(m, std::vector<double>(n));
        for (auto& row : s)
            for (double& v : row) v = rng.uniform(0.0, 1.0);
        double theta = rng.uniform(0.1, 0.9);
        Matching match = match_with_threshold(s, theta);
        for (auto [r, c] : match.pairs) CHECK(s[r][c] >= theta);
        // index partition is complete
        std::vector<bool> rows(m, false), cols(n, false);
        for (auto [r, c] : match.pairs) {
            rows[r] = true;
            cols[c] = true;
        }
        for (int r : match.unmatched_rows) rows[r] = true;
        for (int c : match.unmatched_cols) cols[c] = true;
        for (bool b : rows) CHECK(b);
        for (bool b : cols) CHECK(b);
    }
}
