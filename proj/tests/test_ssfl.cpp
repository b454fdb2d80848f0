#include <doctest.h>

#include "mot/losses.hpp"
#include "mot/rng.hpp"
#include "mot/ssfl.hpp"
#include "mot/synth.hpp"
#include "testutil.hpp"

using namespace mot;

namespace {

SsflConfig tiny_config() {
    SsflConfig cfg;
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.ffn_dim = 12;
    cfg.encoder_depth = 1;
    cfg.map_channels = 4;
    cfg.fused_hidden = 4;
    cfg.pyramid_channels = {3, 3, 3};
    cfg.h1 = 4;
    cfg.w1 = 4;
    return cfg;
}

FeaturePyramid random_pyramid(const SsflConfig& cfg, uint64_t seed, int64_t frame) {
    Rng rng(seed);
    FeaturePyramid p;
    p.frame_index = frame;
    for (int k = 0; k < kPyramidLevels; ++k)
        p.levels[k] = rand_uniform(rng, {cfg.pyramid_channels[k], cfg.level_h(k),
                                         cfg.level_w(k)}, -1, 1);
    return p;
}

}  // namespace

TEST_CASE("build_tokens geometry and split point") {
    SsflConfig cfg = tiny_config();
    SsflModel model(cfg, 1);
    FeaturePyramid a = random_pyramid(cfg, 10, 0), b = random_pyramid(cfg, 11, 1);
    TokenSequence seq = model.build_tokens(a, b, 0);
    CHECK(seq.tokens.shape() == Shape{2 * 16, 8});  // twice the single-frame tokens
    CHECK(seq.split_point == 16);
    TokenSequence seq2 = model.build_tokens(a, b, 2);
    CHECK(seq2.tokens.shape() == Shape{2 * 1, 8});
}

TEST_CASE("build_tokens with crafted projection exposes input channels") {
    SsflConfig cfg = tiny_config();
    cfg.positional_encoding = false;
    SsflModel model(cfg, 2);
    // projection = rows of the identity: token dim d copies channel d (d < 3)
    {
        auto w = model.params().get("ssfl.level1.proj.w").raw_data();
        std::fill(w.begin(), w.end(), 0.0);
        for (int64_t d = 0; d < 3; ++d) w[d * 3 + d] = 1.0;
    }
    FeaturePyramid a = random_pyramid(cfg, 12, 0), b = random_pyramid(cfg, 13, 1);
    TokenSequence seq = model.build_tokens(a, b, 0);
    // token r (first half), channel c = input a.levels[0][c, r/W, r%W]
    for (int64_t r = 0; r < 16; ++r)
        for (int64_t c = 0; c < 3; ++c)
            CHECK(seq.tokens.at({r, c}) ==
                  doctest::Approx(a.levels[0].at({c, r / 4, r % 4})).epsilon(1e-12));
}

TEST_CASE("build_tokens rejects mismatched frame shapes") {
    SsflConfig cfg = tiny_config();
    SsflModel model(cfg, 3);
    FeaturePyramid a = random_pyramid(cfg, 14, 0);
    SsflConfig other = cfg;
    other.h1 = 6;
    other.w1 = 6;
    FeaturePyramid b = random_pyramid(other, 15, 1);
    CHECK_THROWS_AS(model.build_tokens(a, b, 0), std::invalid_argument);
}

TEST_CASE("interaction_enhance emits model-dim maps per level") {
    SsflConfig cfg = tiny_config();
    SsflModel model(cfg, 4);
    FeaturePyramid a = random_pyramid(cfg, 16, 0), b = random_pyramid(cfg, 17, 1);
    auto out = model.interaction_enhance(a, b);
    CHECK(out[0].shape() == Shape{8, 4, 4});
    CHECK(out[1].shape() == Shape{8, 2, 2});
    CHECK(out[2].shape() == Shape{8, 1, 1});
}

TEST_CASE("zero-init encoder reduces enhancement to layer-normed projection") {
    SsflConfig cfg = tiny_config();
    cfg.positional_encoding = false;
    SsflModel model(cfg, 5);
    FeaturePyramid a = random_pyramid(cfg, 18, 0), b = random_pyramid(cfg, 19, 1);
    auto out = model.interaction_enhance(a, b);

    // default init: attention/FFN output projections are zero, so the encoder
    // output is the layer norm of its input tokens (frame embedding is zero)
    Tensor proj = conv1x1(b.levels[0], model.params().get("ssfl.level1.proj.w"),
                          model.params().get("ssfl.level1.proj.b"));
    Tensor tokens = transpose(reshape(proj, {8, 16}), 0, 1);
    Tensor expect = layer_norm(tokens, model.params().get("ssfl.level1.encoder.l0.ln1.gamma"),
                               model.params().get("ssfl.level1.encoder.l0.ln1.beta"));
    Tensor got = transpose(reshape(out[0], {8, 16}), 0, 1);
    CHECK(testutil::max_abs_diff(got.data(), expect.data()) < 1e-3);
}

TEST_CASE("gradient reaches both frames through the encoder") {
    SsflConfig cfg = tiny_config();
    SsflModel model(cfg, 6);
    // the cross-frame path runs through attention; the zero-initialized
    // output projections must carry weight for it to transmit gradient
    Rng wr(60);
    for (int k = 1; k <= 3; ++k)
        for (double& v : model.params()
                             .get("ssfl.level" + std::to_string(k) + ".encoder.l0.attn.wo")
                             .raw_data())
            v = wr.uniform(-0.3, 0.3);
    FeaturePyramid a = random_pyramid(cfg, 20, 0), b = random_pyramid(cfg, 21, 1);
    for (int k = 0; k < kPyramidLevels; ++k) {
        a.levels[k].set_requires_grad(true);
        b.levels[k].set_requires_grad(true);
    }
    IdAwareMap m = model.forward(a, b);
    sum(m.map * m.map).backward();
    auto nonzero = [](std::span<const double> g) {
        for (double v : g)
            if (v != 0.0) return true;
        return false;
    };
    CHECK(nonzero(a.levels[0].grad()));
    CHECK(nonzero(b.levels[0].grad()));
}

TEST_CASE("fuse_levels produces the ID-aware map shape and uniformity") {
    SsflConfig cfg = tiny_config();
    SsflModel model(cfg, 7);
    std::array<Tensor, kPyramidLevels> enhanced = {
        Tensor::full({8, 4, 4}, 0.3), Tensor::full({8, 2, 2}, -0.2),
        Tensor::full({8, 1, 1}, 0.9)};
    Tensor fused = model.fuse_levels(enhanced);
    CHECK(fused.shape() == Shape{4, 4, 4});
    // spatially uniform inputs stay uniform through upsample + 1x1 convs
    for (int64_t c = 0; c < 4; ++c)
        for (int64_t i = 1; i < 16; ++i)
            CHECK(fused.data()[c * 16 + i] == doctest::Approx(fused.data()[c * 16]));
}

TEST_CASE("forward is deterministic bit for bit") {
    SsflConfig cfg = tiny_config();
    SsflModel m1(cfg, 8), m2(cfg, 8);
    FeaturePyramid a = random_pyramid(cfg, 22, 0), b = random_pyramid(cfg, 23, 1);
    Tensor o1 = m1.forward(a, b).map;
    Tensor o2 = m2.forward(a, b).map;
    CHECK(testutil::bit_identical(o1.data(), o2.data()));
}

TEST_CASE("extract_short_term composes roi_align, reshape and batch norm") {
    SsflConfig cfg = tiny_config();
    SsflModel model(cfg, 9);
    IdAwareMap map;
    map.map = Tensor::full({4, 4, 4}, 1.5);
    map.stride = 8.0;

    // constant map: every feature entry identical after inference-mode
    // normalization with identity statistics
    Tensor f = model.extract_short_term(map, {Box{4, 4, 16, 16}}, Mode::Infer);
    CHECK(f.shape() == Shape{1, 64});
    for (double v : f.data()) CHECK(v == doctest::Approx(f.data()[0]).epsilon(1e-12));

    // distinct constant regions give distinct feature vectors
    Rng rng(24);
    std::vector<double> data(4 * 4 * 4);
    for (int64_t c = 0; c < 4; ++c)
        for (int64_t i = 0; i < 16; ++i)
            data[c * 16 + i] = (i % 4 < 2) ? 1.0 : -1.0;  // left/right halves differ
    IdAwareMap split;
    split.map = Tensor::from_data({4, 4, 4}, std::move(data));
    split.stride = 8.0;
    Tensor f2 = model.extract_short_term(split, {Box{0, 0, 14, 30}, Box{17, 0, 14, 30}},
                                         Mode::Infer);
    CHECK(testutil::max_abs_diff(slice(f2, 0, 0, 1).data(), slice(f2, 0, 1, 1).data()) > 0.1);
}

TEST_CASE("extract_short_term matches the stepwise composition") {
    SsflConfig cfg = tiny_config();
    SsflModel model(cfg, 10);
    Rng rng(25);
    IdAwareMap map;
    map.map = rand_uniform(rng, {4, 4, 4}, -1, 1);
    map.stride = 8.0;
    Box box{5, 3, 20, 22};

    Tensor f = model.extract_short_term(map, {box}, Mode::Infer);

    Tensor crop = roi_align(map.map, box, map.stride);
    Tensor flat = reshape(crop, {1, 64});
    Tensor gamma = model.params().get("ssfl.bn.gamma");
    Tensor beta = model.params().get("ssfl.bn.beta");
    Tensor rm = model.params().get("ssfl.bn.running_mean");
    Tensor rv = model.params().get("ssfl.bn.running_var");
    Tensor expect = (flat - rm) / sqrt(rv + 1e-5) * gamma + beta;
    CHECK(testutil::max_abs_diff(f.data(), expect.data()) < 1e-12);
}

TEST_CASE("shared encoder stacks reuse one parameter set") {
    SsflConfig cfg = tiny_config();
    SsflModel separate(cfg, 11);
    cfg.shared_encoder = true;
    SsflModel shared(cfg, 11);
    CHECK(shared.params().total_size() < separate.params().total_size());
    FeaturePyramid a = random_pyramid(cfg, 26, 0), b = random_pyramid(cfg, 27, 1);
    auto out = shared.interaction_enhance(a, b);
    CHECK(out[0].shape() == Shape{8, 4, 4});
    CHECK(shared.params().has("ssfl.encoder.l0.attn.wq"));
    CHECK_FALSE(shared.params().has("ssfl.level2.encoder.l0.attn.wq"));
}

TEST_CASE("short_term_similarity obeys the clamp convention") {
    Tensor a = Tensor::from_data({1, 3}, {1, 0, 0});
    Tensor b = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, -1, 0, 0});
    Tensor s = short_term_similarity(a, b);
    CHECK(s.at({0, 0}) == 1.0);
    CHECK(s.at({0, 1}) == 0.0);
    CHECK(s.at({0, 2}) == 0.0);
}
