#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mot/checks.hpp"
#include "mot/nn.hpp"
#include "mot/rng.hpp"
#include "testutil.hpp"

using namespace mot;

TEST_CASE("attention over a single token is its value projection") {
    ParameterStore store;
    Rng rng(5);
    AttentionParams p = make_attention_params(store, "a", 6, 2, rng);
    // give the output projection real weights
    {
        Rng wr(6);
        for (double& v : p.wo.raw_data()) v = wr.uniform(-0.5, 0.5);
    }
    Tensor tok = rand_uniform(rng, {1, 6}, -1, 1);
    Tensor out = multi_head_attention(tok, tok, tok, p);
    Tensor expect = linear(linear(tok, p.wv, p.bv), p.wo, p.bo);
    CHECK(testutil::max_abs_diff(out.data(), expect.data()) < 1e-12);
}

TEST_CASE("attention output is invariant to key/value permutation") {
    ParameterStore store;
    Rng rng(7);
    AttentionParams p = make_attention_params(store, "a", 8, 2, rng);
    {
        Rng wr(8);
        for (double& v : p.wo.raw_data()) v = wr.uniform(-0.5, 0.5);
    }
    Tensor q = rand_uniform(rng, {2, 8}, -1, 1);
    Tensor kv = rand_uniform(rng, {4, 8}, -1, 1);
    // reverse the token order
    std::vector<Tensor> rev;
    for (int64_t i = 3; i >= 0; --i) rev.push_back(slice(kv, 0, i, 1));
    Tensor kv_rev = concat(rev, 0);

    Tensor a = multi_head_attention(q, kv, kv, p);
    Tensor b = multi_head_attention(q, kv_rev, kv_rev, p);
    CHECK(testutil::max_abs_diff(a.data(), b.data()) < 1e-12);
}

TEST_CASE("attention rejects indivisible head counts") {
    ParameterStore store;
    Rng rng(9);
    CHECK_THROWS_AS(make_attention_params(store, "a", 6, 4, rng), std::invalid_argument);
}

TEST_CASE("encoder layer preserves token geometry") {
    ParameterStore store;
    Rng rng(11);
    EncoderLayerParams enc = make_encoder_layer(store, "e", 8, 2, 16, rng);
    for (int64_t n : {1, 3, 9}) {
        Tensor tok = rand_uniform(rng, {n, 8}, -1, 1);
        Tensor out = encoder_layer(tok, enc);
        CHECK(out.shape() == Shape{n, 8});
    }
}

TEST_CASE("zero-initialized projections reduce the encoder layer to layer norm") {
    ParameterStore store;
    Rng rng(12);
    EncoderLayerParams enc = make_encoder_layer(store, "e", 8, 2, 16, rng);
    // factory zero-initializes attn.wo and ffn.w2 already
    Tensor tok = rand_uniform(rng, {5, 8}, -2, 2);
    Tensor out = encoder_layer(tok, enc);
    Tensor ln = layer_norm(tok, enc.ln1_gamma, enc.ln1_beta);
    CHECK(testutil::max_abs_diff(out.data(), ln.data()) < 1e-4);
}

TEST_CASE("pre-norm attention block with zeroed projection is exactly identity") {
    ParameterStore store;
    Rng rng(13);
    AttentionBlockParams blk = make_attention_block(store, "b", 8, 2, rng);
    Tensor tok = rand_uniform(rng, {6, 8}, -2, 2);
    Tensor out = attention_block(tok, blk);
    CHECK(testutil::bit_identical(out.data(), tok.data()));
}

TEST_CASE("encoder layer gradient check") {
    ParameterStore store;
    Rng rng(14);
    EncoderLayerParams enc = make_encoder_layer(store, "e", 8, 2, 12, rng);
    for (int64_t i = 0; i < enc.attn.wo.numel(); i += 5) enc.attn.wo.raw_data()[i] = 0.11;
    for (int64_t i = 0; i < enc.ffn_w2.numel(); i += 3) enc.ffn_w2.raw_data()[i] = -0.07;
    Tensor tok = rand_uniform(rng, {4, 8}, -1, 1, true);
    std::vector<Tensor> leaves{tok};
    for (const auto& p : store.items()) leaves.push_back(p->tensor);
    auto r = finite_diff_check(
        "enc", [&] { return sum(encoder_layer(tok, enc) * tok); }, leaves,
        GradCheckOptions{1e-5, 1e-4, 4});
    CHECK(r.ok);
}

TEST_CASE("batch norm: train mode normalizes, infer mode uses running stats") {
    ParameterStore store;
    BatchNormState bn = make_batch_norm(store, "bn", 3);
    Rng rng(15);
    Tensor x = rand_uniform(rng, {16, 3}, 2.0, 4.0);

    Tensor t = batch_norm(x, bn, Mode::Train);
    // per-feature mean ~0, variance ~1 over the batch
    for (int64_t f = 0; f < 3; ++f) {
        double mu = 0, var = 0;
        for (int64_t b = 0; b < 16; ++b) mu += t.at({b, f});
        mu /= 16;
        for (int64_t b = 0; b < 16; ++b) var += (t.at({b, f}) - mu) * (t.at({b, f}) - mu);
        var /= 16;
        CHECK(std::fabs(mu) < 1e-10);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
    // running stats moved toward the batch statistics
    CHECK(bn.running_mean.data()[0] > 0.0);

    Tensor i1 = batch_norm(x, bn, Mode::Infer);
    Tensor i2 = batch_norm(x, bn, Mode::Infer);
    CHECK(testutil::bit_identical(i1.data(), i2.data()));  // no state change in infer
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    namespace fs = std::filesystem;
    auto make_store = [](uint64_t seed, ParameterStore& store) {
        Rng rng(seed);
        store.add("m.w", rand_uniform(rng, {4, 3}, -1, 1, true));
        store.add("m.b", rand_uniform(rng, {4}, -1, 1, true));
        store.add("m.running", rand_uniform(rng, {4}, 0, 1, false), false);
    };
    ParameterStore a;
    make_store(1234, a);
    fs::path path = fs::temp_directory_path() / "mot_ckpt_test.bin";
    a.save(path.string());

    ParameterStore b;
    make_store(999, b);  // different values, same structure
    b.load(path.string());
    for (size_t i = 0; i < a.items().size(); ++i)
        CHECK(testutil::bit_identical(a.items()[i]->tensor.data(),
                                      b.items()[i]->tensor.data()));

    // second save must be byte-identical to the first
    fs::path path2 = fs::temp_directory_path() / "mot_ckpt_test2.bin";
    b.save(path2.string());
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("checkpoint load rejects shape mismatches") {
    namespace fs = std::filesystem;
    ParameterStore a;
    a.add("w", Tensor::zeros({2, 2}));
    fs::path path = fs::temp_directory_path() / "mot_ckpt_bad.bin";
    a.save(path.string());
    ParameterStore b;
    b.add("w", Tensor::zeros({3, 2}));
    CHECK_THROWS_AS(b.load(path.string()), std::runtime_error);
    fs::remove(path);
}

TEST_CASE("duplicate parameter names are rejected") {
    ParameterStore store;
    store.add("w", Tensor::zeros({1}));
    CHECK_THROWS_AS(store.add("w", Tensor::zeros({1})), std::invalid_argument);
}

TEST_CASE("conv1x1 with an identity channel matrix is a no-op") {
    Rng rng(16);
    Tensor map = rand_uniform(rng, {3, 4, 5}, -1, 1);
    Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor out = conv1x1(map, eye, Tensor::zeros({3}));
    CHECK(testutil::bit_identical(out.data(), map.data()));
}

TEST_CASE("sinusoidal encoding distinguishes positions") {
    Tensor pe = sinusoidal_encoding_2d(3, 4, 8);
    CHECK(pe.shape() == Shape{12, 8});
    CHECK(testutil::max_abs_diff(slice(pe, 0, 0, 1).data(), slice(pe, 0, 5, 1).data()) > 1e-3);
}
