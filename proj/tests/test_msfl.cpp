#include <doctest.h>

#include "mot/msfl.hpp"
#include "mot/rng.hpp"
#include "testutil.hpp"

using namespace mot;

namespace {

CropHistory history_with(std::vector<int64_t> frames, int64_t c = 6, uint64_t seed = 40) {
    Rng rng(seed);
    CropHistory h;
    for (int64_t f : frames) h.emplace_back(f, rand_uniform(rng, {c, 4, 4}, -1, 1));
    return h;
}

}  // namespace

TEST_CASE("collect_crop_stack keeps per-frame crops when all present") {
    CropHistory h = history_with({10, 11, 12, 13});
    CropStack s = collect_crop_stack(h, 10, 13, BankKind::Lost);
    CHECK(s.crops.shape() == Shape{4, 6, 4, 4});
    CHECK(s.frames == std::vector<int64_t>{10, 11, 12, 13});
    for (int64_t f = 0; f < 4; ++f)
        CHECK(testutil::bit_identical(slice(s.crops, 0, f, 1).data(), h[f].second.data()));
}

TEST_CASE("collect_crop_stack replicates the nearest crop for gaps") {
    CropHistory h = history_with({13});  // only the window's final frame
    CropStack s = collect_crop_stack(h, 10, 13, BankKind::Candidate);
    CHECK(s.frames == std::vector<int64_t>{13, 13, 13, 13});
    for (int64_t f = 0; f < 4; ++f)
        CHECK(testutil::bit_identical(slice(s.crops, 0, f, 1).data(), h[0].second.data()));

    CropHistory h2 = history_with({11, 13});
    CropStack s2 = collect_crop_stack(h2, 10, 13, BankKind::Lost);
    // frame 12 ties between 11 and 13; the earlier frame wins
    CHECK(s2.frames == std::vector<int64_t>{11, 11, 11, 13});
}

TEST_CASE("collect_crop_stack with an empty window is an error") {
    CropHistory h = history_with({5, 6});
    CHECK_THROWS_AS(collect_crop_stack(h, 10, 13, BankKind::Lost), std::invalid_argument);
}

TEST_CASE("banks enforce disjointness and age limits") {
    TrackletBanks banks(BankConfig{100, 20, 4});
    CropStack stack;
    stack.crops = Tensor::zeros({4, 2, 4, 4});
    banks.add_lost({1, 50, stack});
    banks.add_candidate({2, 60});
    CHECK_THROWS_AS(banks.add_candidate({1, 61}), std::invalid_argument);
    CHECK_THROWS_AS(banks.add_lost({2, 61, stack}), std::invalid_argument);

    // association removes both sides
    BankEvents ev;
    ev.associated = {{1, 2}};
    bank_update(banks, ev, 62);
    CHECK_FALSE(banks.contains(1));
    CHECK_FALSE(banks.contains(2));
}

TEST_CASE("bank_update applies the documented eviction horizons") {
    TrackletBanks banks(BankConfig{100, 20, 4});
    CropStack stack;
    stack.crops = Tensor::zeros({4, 2, 4, 4});
    BankEvents admit;
    admit.new_lost = {{1, 50, stack}};
    admit.new_candidates = {{2, 100}};
    bank_update(banks, admit, 100);

    for (int64_t f = 101; f <= 120; ++f) {
        bank_update(banks, {}, f);
        CHECK(banks.contains(2));  // alive through age 20
        CHECK(banks.contains(1));
    }
    bank_update(banks, {}, 121);
    CHECK_FALSE(banks.contains(2));  // evicted at age 21
    bank_update(banks, {}, 150);  // lost age 100: still held
    CHECK(banks.contains(1));
    bank_update(banks, {}, 151);  // lost age 101: evicted
    CHECK_FALSE(banks.contains(1));
}

TEST_CASE("tracklet_feature with one-hot weights is the mean crop of that frame") {
    MsflConfig cfg;
    cfg.dim = 6;
    cfg.heads = 2;
    cfg.blocks = 3;
    cfg.tau = 4;
    MsflModel model(cfg, 77);
    // default init: attention blocks are exact identities, encodings zero
    auto w = model.params().get("msfl.w_lost").raw_data();
    std::fill(w.begin(), w.end(), 0.0);
    w[2] = 1.0;  // select frame 2

    Rng rng(41);
    CropStack stack;
    stack.kind = BankKind::Lost;
    stack.crops = rand_uniform(rng, {4, 6, 4, 4}, -1, 1);
    Tensor g = model.tracklet_feature(stack);
    CHECK(g.shape() == Shape{6});

    Tensor frame2 = slice(stack.crops, 0, 2, 1);                    // (1,6,4,4)
    Tensor mean_crop = mean(reshape(frame2, {6, 16}), 1, false);    // (6,)
    CHECK(testutil::max_abs_diff(g.data(), mean_crop.data()) < 1e-12);
}

TEST_CASE("constant crops scale with the weight sum") {
    MsflConfig cfg;
    cfg.dim = 4;
    cfg.heads = 2;
    cfg.blocks = 3;
    cfg.tau = 4;
    MsflModel model(cfg, 78);
    CropStack stack;
    stack.kind = BankKind::Candidate;
    stack.crops = Tensor::full({4, 4, 4, 4}, 2.0);
    Tensor g1 = model.tracklet_feature(stack);
    // scale the candidate weights by 3: output scales by 3 (linear combination)
    for (double& v : model.params().get("msfl.w_cadi").raw_data()) v *= 3.0;
    Tensor g2 = model.tracklet_feature(stack);
    for (int64_t i = 0; i < 4; ++i)
        CHECK(g2.data()[i] == doctest::Approx(3.0 * g1.data()[i]).epsilon(1e-12));
}

TEST_CASE("frame permutation invariance with zero encodings and uniform weights") {
    MsflConfig cfg;
    cfg.dim = 6;
    cfg.heads = 3;
    cfg.blocks = 3;
    cfg.tau = 4;
    MsflModel model(cfg, 79);
    // make the attention blocks genuinely active but keep encodings at zero
    Rng wr(80);
    for (int b = 0; b < 3; ++b)
        for (double& v :
             model.params().get("msfl.block" + std::to_string(b) + ".attn.wo").raw_data())
            v = wr.uniform(-0.3, 0.3);

    Rng rng(42);
    CropStack stack;
    stack.kind = BankKind::Lost;
    stack.crops = rand_uniform(rng, {4, 6, 4, 4}, -1, 1);

    CropStack permuted;
    permuted.kind = BankKind::Lost;
    std::vector<Tensor> frames;
    for (int64_t f : {2, 0, 3, 1}) frames.push_back(slice(stack.crops, 0, f, 1));
    permuted.crops = concat(frames, 0);

    Tensor a = model.tracklet_feature(stack);
    Tensor b = model.tracklet_feature(permuted);
    CHECK(testutil::max_abs_diff(a.data(), b.data()) < 1e-9);
}

TEST_CASE("tracklet_feature validates the stack shape") {
    MsflConfig cfg;
    MsflModel model(cfg, 81);
    CropStack bad;
    bad.crops = Tensor::zeros({3, 128, 4, 4});  // tau mismatch
    CHECK_THROWS_AS(model.tracklet_feature(bad), std::invalid_argument);
}

TEST_CASE("long_term_similarity handles empty banks and the clamp") {
    CHECK(long_term_similarity({}, {}).numel() == 0);
    Tensor a = Tensor::from_data({3}, {1, 0, 0});
    Tensor b = Tensor::from_data({3}, {0, 1, 0});
    Tensor c = Tensor::from_data({3}, {-1, 0, 0});
    Tensor s = long_term_similarity({a}, {a, b, c});
    CHECK(s.at({0, 0}) == 1.0);
    CHECK(s.at({0, 1}) == 0.0);
    CHECK(s.at({0, 2}) == 0.0);
}

TEST_CASE("oracle tracklet feature is the crop average") {
    Rng rng(43);
    CropStack stack;
    stack.crops = rand_uniform(rng, {4, 3, 4, 4}, -1, 1);
    Tensor g = oracle_tracklet_feature(stack);
    for (int64_t c = 0; c < 3; ++c) {
        double acc = 0;
        for (int64_t f = 0; f < 4; ++f)
            for (int64_t i = 0; i < 16; ++i) acc += stack.crops.at({f, c, i / 4, i % 4});
        CHECK(g.data()[c] == doctest::Approx(acc / 64.0).epsilon(1e-12));
    }
}
