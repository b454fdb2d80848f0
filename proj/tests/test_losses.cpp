#include <doctest.h>

#include <cmath>

#include "mot/losses.hpp"
#include "mot/rng.hpp"
#include "testutil.hpp"

using namespace mot;

TEST_CASE("label_matrix marks identity matches") {
    Matrix y = label_matrix({1, 2}, {2, 1});
    CHECK(y == Matrix{{0, 1}, {1, 0}});
    CHECK(label_matrix({1, 2}, {3, 4}) == Matrix{{0, 0}, {0, 0}});
    CHECK(label_matrix({5, 6}, {5, 6}) == Matrix{{1, 0}, {0, 1}});
}

TEST_CASE("inter_frame_loss saturates at confident correct entries") {
    // pre-softmax gap of 10 at unit temperature
    Tensor s = Tensor::from_data({1, 3}, {10, 0, 0});
    Tensor loss = inter_frame_loss(s, {{1, 0, 0}}, 1.0);
    CHECK(loss.item() < 1e-3);
}

TEST_CASE("inter_frame_loss on a uniform row is ln(n)") {
    Tensor s = Tensor::full({1, 4}, 0.37);
    Tensor loss = inter_frame_loss(s, {{0, 1, 0, 0}}, 0.1);
    CHECK(loss.item() == doctest::Approx(1.3862943611198906).epsilon(1e-12));
}

TEST_CASE("inter_frame_loss handles rows without a match") {
    Tensor s = Tensor::from_data({1, 2}, {0.0, 0.0});
    // all-zero target row scores against the appended no-match class
    Tensor loss = inter_frame_loss(s, {{0, 0}}, 1.0);
    CHECK(loss.item() == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    Tensor learned = Tensor::scalar(50.0);
    Tensor low = inter_frame_loss(s, {{0, 0}}, 1.0, learned);
    CHECK(low.item() < 1e-3);
}

TEST_CASE("inter_frame_loss rejects mismatched shapes") {
    Tensor s = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(inter_frame_loss(s, {{1, 0}}, 1.0), std::invalid_argument);
}

TEST_CASE("memory update: single entry keeps itself") {
    MemoryBank bank;
    std::vector<double> f{0.6, 0.8};
    CHECK(bank.update(1, f) == 1.0);  // insertion
    double alpha = bank.update(1, f);
    CHECK(alpha == 1.0);  // K=1 softmax
    CHECK(testutil::all_close(bank.feature(1), f, 1e-15));
}

TEST_CASE("memory update ratio for orthogonal two-entry bank") {
    MemoryBank bank;
    bank.update(1, std::vector<double>{1.0, 0.0});
    bank.update(2, std::vector<double>{0.0, 1.0});
    // normalized dots: 1 to own entry, 0 to the other
    double alpha = bank.update(1, std::vector<double>{1.0, 0.0});
    CHECK(alpha == doctest::Approx(0.7310585786300049).epsilon(1e-14));
}

TEST_CASE("memory update stays a convex combination") {
    Rng rng(31);
    MemoryBank bank;
    for (int64_t id = 1; id <= 4; ++id)
        bank.update(id, rand_uniform(rng, {8}, -1, 1).data());
    for (int trial = 0; trial < 500; ++trial) {
        int64_t id = rng.uniform_int(1, 4);
        auto before = bank.feature(id);
        Tensor f = rand_uniform(rng, {8}, -1, 1);
        double alpha = bank.update(id, f.data());
        CHECK(alpha > 0.0);
        CHECK(alpha <= 1.0);
        for (size_t i = 0; i < before.size(); ++i) {
            double lo = std::min(before[i], f.data()[i]);
            double hi = std::max(before[i], f.data()[i]);
            CHECK(bank.feature(id)[i] >= lo - 1e-12);
            CHECK(bank.feature(id)[i] <= hi + 1e-12);
        }
    }
}

TEST_CASE("memory_loss is zero for a single-identity bank") {
    MemoryBank bank;
    bank.update(1, std::vector<double>{1.0, 2.0, 3.0});
    Tensor f = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
    Tensor loss = memory_loss(bank, {f}, {1});
    CHECK(loss.item() == 0.0);
}

TEST_CASE("memory_loss saturates for well-separated entries") {
    MemoryBank bank;
    bank.update(1, std::vector<double>{1.0, 0.0, 0.0});
    bank.update(2, std::vector<double>{0.0, 1.0, 0.0});
    bank.update(3, std::vector<double>{0.0, 0.0, 1.0});
    Tensor f = Tensor::from_data({3}, {1.0, 0.0, 0.0});
    Tensor loss = memory_loss(bank, {f}, {1}, 0.01);  // low temperature
    CHECK(loss.item() < 1e-6);
}

TEST_CASE("memory_loss requires known identities") {
    MemoryBank bank;
    bank.update(1, std::vector<double>{1.0});
    Tensor f = Tensor::from_data({1}, {1.0});
    CHECK_THROWS_AS(memory_loss(bank, {f}, {9}), std::invalid_argument);
}

TEST_CASE("triplet loss hinge arithmetic") {
    // anchor == positive (cos 1), hard negative orthogonal (cos 0), margin 0.3
    Tensor a = Tensor::from_data({1, 2}, {1.0, 0.0});
    Tensor n = Tensor::from_data({1, 2}, {0.0, 1.0});
    Tensor loss = inner_frame_triplet_loss({a, n}, {a, n}, {1, 2}, {1, 2}, 0.3);
    CHECK(loss.item() == 0.0);

    // positive equals the negative: the term is exactly the margin
    Tensor loss2 = inner_frame_triplet_loss({a, a}, {a, a}, {1, 2}, {1, 2}, 0.3);
    CHECK(loss2.item() == doctest::Approx(0.3).epsilon(1e-12));

    // a single target has no negatives
    Tensor loss3 = inner_frame_triplet_loss({a}, {a}, {1}, {1}, 0.3);
    CHECK(loss3.item() == 0.0);
}

TEST_CASE("total_loss applies the configured weights exactly") {
    Tensor l = total_loss(Tensor::scalar(1.0), Tensor::scalar(2.0), Tensor::scalar(3.0),
                          0.2, 1.0);
    CHECK(l.item() == 4.4);  // exact in float64 with left-to-right evaluation
    CHECK(total_loss(Tensor::scalar(7.0), Tensor::scalar(2.0), Tensor::scalar(3.0), 0.0, 0.0)
              .item() == 7.0);
    CHECK(total_loss(Tensor::scalar(0.0), Tensor::scalar(0.0), Tensor::scalar(0.0), 0.2, 1.0)
              .item() == 0.0);
}

TEST_CASE("asso_loss basics") {
    Tensor near_one = Tensor::from_data({1}, {1.0 - 1e-7});
    CHECK(asso_loss(near_one, {1.0}).item() < 1e-6);

    Tensor half = Tensor::from_data({2}, {0.5, 0.5});
    CHECK(asso_loss(half, {1.0, 0.0}).item() ==
          doctest::Approx(0.6931471805599453).epsilon(1e-12));

    CHECK_THROWS_AS(asso_loss(Tensor::zeros({0}), {}), std::invalid_argument);
}

TEST_CASE("losses are nonnegative") {
    Rng rng(33);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor s = rand_uniform(rng, {3, 4}, 0, 1);
        Matrix y(3, std::vector<double>(4, 0.0));
        y[0][rng.uniform_int(0, 3)] = 1.0;
        y[1][rng.uniform_int(0, 3)] = 1.0;
        CHECK(inter_frame_loss(s, y).item() >= 0.0);
        Tensor sims = rand_uniform(rng, {4}, 0.01, 0.99);
        CHECK(asso_loss(sims, {1.0, 0.0, 1.0, 0.0}).item() >= 0.0);
    }
}

TEST_CASE("cosine matrix clamps negatives and zero norms to zero") {
    Tensor a = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 0.0});  // second row zero
    Tensor b = Tensor::from_data({2, 2}, {-1.0, 0.0, 1.0, 0.0});
    Tensor s = cosine_similarity_clamped(a, b);
    CHECK(s.at({0, 0}) == 0.0);  // cos -1 clamped
    CHECK(s.at({0, 1}) == 1.0);  // identical unit vectors
    CHECK(s.at({1, 0}) == 0.0);  // zero-norm row
    CHECK(s.at({1, 1}) == 0.0);
}

TEST_CASE("cosine matrix is scale invariant") {
    Rng rng(34);
    Tensor a = rand_uniform(rng, {3, 5}, -1, 1);
    Tensor b = rand_uniform(rng, {2, 5}, -1, 1);
    Tensor s1 = cosine_similarity_clamped(a, b);
    Tensor s2 = cosine_similarity_clamped(a * 37.5, b * 0.004);
    CHECK(testutil::max_abs_diff(s1.data(), s2.data()) < 1e-12);
}
