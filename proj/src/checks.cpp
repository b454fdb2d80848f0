#include "mot/checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>

#include "mot/geometry.hpp"
#include "mot/losses.hpp"
#include "mot/moteval.hpp"
#include "mot/msfl.hpp"
#include "mot/nn.hpp"
#include "mot/rng.hpp"
#include "mot/ssfl.hpp"
#include "mot/synth.hpp"

namespace mot {

GradCheckResult finite_diff_check(const std::string& name,
                                  const std::function<Tensor()>& loss_fn,
                                  const std::vector<Tensor>& leaves, GradCheckOptions opt) {
    GradCheckResult res;
    res.name = name;

    for (auto t : leaves) t.zero_grad();
    Tensor loss = loss_fn();
    loss.backward();

    std::vector<std::vector<double>> analytic;
    for (const auto& t : leaves) analytic.emplace_back(t.grad().begin(), t.grad().end());

    double max_rel = 0.0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        Tensor leaf = leaves[li];
        int64_t n = leaf.numel();
        int64_t probes = std::min<int64_t>(n, opt.max_probes);
        for (int64_t p = 0; p < probes; ++p) {
            int64_t idx = probes == n ? p : (p * n) / probes;
            auto data = leaf.raw_data();
            double orig = data[idx];
            double fp, fm;
            {
                NoGradGuard ng;
                data[idx] = orig + opt.h;
                fp = loss_fn().item();
                data[idx] = orig - opt.h;
                fm = loss_fn().item();
                data[idx] = orig;
            }
            double numeric = (fp - fm) / (2.0 * opt.h);
            double a = analytic[li][idx];
            double rel = std::fabs(a - numeric) /
                         std::max({std::fabs(a), std::fabs(numeric), 1e-2});
            max_rel = std::max(max_rel, rel);
            ++res.probes;
        }
    }
    res.max_rel_err = max_rel;
    res.ok = max_rel <= opt.tol;
    return res;
}

double brute_force_assignment_cost(const Matrix& cost) {
    int m = static_cast<int>(cost.size());
    int n = m == 0 ? 0 : static_cast<int>(cost[0].size());
    if (m == 0 || n == 0) return 0.0;

    // enumerate every maximum assignment; totals always accumulate in
    // ascending row order so they are bit-comparable with hungarian()
    double best = std::numeric_limits<double>::infinity();
    if (m <= n) {
        std::vector<bool> used(n, false);
        std::function<void(int, double)> rec = [&](int row, double acc) {
            if (row == m) {
                best = std::min(best, acc);
                return;
            }
            for (int c = 0; c < n; ++c) {
                if (used[c]) continue;
                used[c] = true;
                rec(row + 1, acc + cost[row][c]);
                used[c] = false;
            }
        };
        rec(0, 0.0);
        return best;
    }
    // more rows than columns: choose a distinct row per column, then re-sum
    // the chosen pairs in row order
    std::vector<int> row_of_col(n, -1);
    std::function<void(int)> rec = [&](int col) {
        if (col == n) {
            std::vector<std::pair<int, int>> pairs;
            for (int c = 0; c < n; ++c) pairs.emplace_back(row_of_col[c], c);
            std::sort(pairs.begin(), pairs.end());
            double acc = 0.0;
            for (auto [r, c] : pairs) acc += cost[r][c];
            best = std::min(best, acc);
            return;
        }
        for (int r = 0; r < m; ++r) {
            bool taken = false;
            for (int c = 0; c < col; ++c) taken = taken || row_of_col[c] == r;
            if (taken) continue;
            row_of_col[col] = r;
            rec(col + 1);
        }
    };
    rec(0);
    return best;
}

// ---- gradient-check battery ----

namespace {

Tensor randt(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    return rand_uniform(rng, std::move(shape), lo, hi, true);
}

std::vector<GradCheckResult> elementwise_checks() {
    std::vector<GradCheckResult> out;
    Rng rng(11);
    Tensor a = randt(rng, {3, 4});
    Tensor b = randt(rng, {4});
    Tensor c = randt(rng, {3, 4}, 0.5, 2.0);

    out.push_back(finite_diff_check("add broadcast", [&] { return sum(a + b); }, {a, b}));
    out.push_back(finite_diff_check("sub", [&] { return sum((a - b) * (a - b)); }, {a, b}));
    out.push_back(finite_diff_check("mul", [&] { return sum(a * c); }, {a, c}));
    out.push_back(finite_diff_check("div", [&] { return sum(a / c); }, {a, c}));
    out.push_back(finite_diff_check("scalar ops", [&] { return sum(a * 2.5 + 1.0 - neg(a)); }, {a}));
    out.push_back(finite_diff_check("relu", [&] { return sum(relu(a + 0.05)); }, {a}));
    out.push_back(finite_diff_check("clamp", [&] { return sum(clamp(a * 0.3, -0.2, 0.2) * c); }, {a}));
    out.push_back(finite_diff_check("sqrt", [&] { return sum(sqrt(c)); }, {c}));
    out.push_back(finite_diff_check("log", [&] { return sum(log(c)); }, {c}));
    return out;
}

std::vector<GradCheckResult> shape_reduction_checks() {
    std::vector<GradCheckResult> out;
    Rng rng(12);
    Tensor a = randt(rng, {2, 3, 4});
    out.push_back(finite_diff_check(
        "reshape+transpose", [&] { return sum(transpose(reshape(a, {6, 4}), 0, 1) *
                                              transpose(reshape(a, {6, 4}), 0, 1)); },
        {a}));
    Tensor p = randt(rng, {2, 3});
    Tensor q = randt(rng, {2, 3});
    out.push_back(finite_diff_check(
        "concat+slice", [&] {
            Tensor cat = concat({p, q}, 0);  // (4,3)
            return sum(slice(cat, 0, 1, 2) * slice(cat, 0, 2, 2));
        },
        {p, q}));
    out.push_back(finite_diff_check("sum axis", [&] { return sum(sum(a, 1, true) * 0.5); }, {a}));
    out.push_back(finite_diff_check("mean axis", [&] { return sum(mean(a, 2, false) *
                                                                  mean(a, 2, false)); },
                                    {a}));
    out.push_back(finite_diff_check("softmax", [&] {
        Tensor s = softmax(reshape(a, {6, 4}), 1);
        return sum(s * s);
    }, {a}));
    out.push_back(finite_diff_check("log_softmax", [&] {
        Tensor s = log_softmax(reshape(a, {6, 4}), 1);
        return neg(sum(slice(s, 1, 0, 1)));
    }, {a}));
    return out;
}

std::vector<GradCheckResult> linalg_spatial_checks() {
    std::vector<GradCheckResult> out;
    Rng rng(13);
    Tensor a = randt(rng, {4, 3});
    Tensor b = randt(rng, {3, 2});
    out.push_back(finite_diff_check(
        "matmul", [&] { return sum(matmul(a, b)); }, {a, b},
        GradCheckOptions{1e-5, 1e-6, 12}));
    Tensor ab = randt(rng, {2, 3, 4});
    Tensor bb = randt(rng, {4, 2});
    out.push_back(finite_diff_check(
        "matmul batched", [&] { return sum(matmul(ab, bb) * matmul(ab, bb)); }, {ab, bb}));

    Tensor map = randt(rng, {2, 3, 5});
    out.push_back(finite_diff_check(
        "bilinear_upsample", [&] {
            Tensor u = bilinear_upsample(map, 6, 10);
            return sum(u * u);
        },
        {map}));
    Tensor w = randt(rng, {4, 2});
    Tensor bias = randt(rng, {4});
    out.push_back(finite_diff_check(
        "conv1x1", [&] { return sum(relu(conv1x1(map, w, bias))); }, {map, w, bias}));

    Tensor roi_map = randt(rng, {2, 6, 6});
    Box box{9.0, 6.0, 22.0, 30.0};
    out.push_back(finite_diff_check(
        "roi_align", [&] {
            Tensor r = roi_align(roi_map, box, 8.0);
            return sum(r * r);
        },
        {roi_map}));
    return out;
}

std::vector<GradCheckResult> layer_checks() {
    std::vector<GradCheckResult> out;
    Rng rng(14);
    Tensor x = randt(rng, {5, 6});
    Tensor gamma = randt(rng, {6}, 0.5, 1.5);
    Tensor beta = randt(rng, {6});
    out.push_back(finite_diff_check(
        "layer_norm", [&] { return sum(layer_norm(x, gamma, beta) *
                                       layer_norm(x, gamma, beta)); },
        {x, gamma, beta}));

    ParameterStore bn_store;
    BatchNormState bn = make_batch_norm(bn_store, "bn", 6);
    out.push_back(finite_diff_check(
        "batch_norm train", [&] { return sum(batch_norm(x, bn, Mode::Train) *
                                             batch_norm(x, bn, Mode::Train)); },
        {x, bn.gamma, bn.beta}));

    ParameterStore mha_store;
    Rng prng(15);
    AttentionParams ap = make_attention_params(mha_store, "mha", 4, 2, prng);
    // zero-initialized output projections would hide half the graph
    ap.wo.raw_data()[0] = 0.3;
    ap.wo.raw_data()[5] = -0.2;
    ap.wo.raw_data()[10] = 0.15;
    Tensor tokens = randt(rng, {3, 4});
    std::vector<Tensor> mha_leaves{tokens, ap.wq, ap.bq, ap.wk, ap.bk,
                                   ap.wv, ap.bv, ap.wo, ap.bo};
    out.push_back(finite_diff_check(
        "multi_head_attention",
        [&] {
            Tensor y = multi_head_attention(tokens, tokens, tokens, ap);
            return sum(y * y);
        },
        mha_leaves, GradCheckOptions{1e-5, 1e-4, 6}));

    ParameterStore enc_store;
    Rng erng(16);
    EncoderLayerParams enc = make_encoder_layer(enc_store, "enc", 8, 2, 12, erng);
    for (int64_t i = 0; i < enc.attn.wo.numel(); i += 9)
        enc.attn.wo.raw_data()[i] = 0.1 + 0.01 * static_cast<double>(i);
    for (int64_t i = 0; i < enc.ffn_w2.numel(); i += 7)
        enc.ffn_w2.raw_data()[i] = -0.1 + 0.01 * static_cast<double>(i % 5);
    Tensor etok = randt(rng, {4, 8});
    std::vector<Tensor> enc_leaves{etok};
    for (const auto& p : enc_store.items()) enc_leaves.push_back(p->tensor);
    out.push_back(finite_diff_check(
        "encoder_layer",
        [&] {
            Tensor y = encoder_layer(etok, enc);
            return sum(y * etok);
        },
        enc_leaves, GradCheckOptions{1e-5, 1e-4, 4}));

    ParameterStore blk_store;
    Rng brng(17);
    AttentionBlockParams blk = make_attention_block(blk_store, "blk", 8, 2, brng);
    for (int64_t i = 0; i < blk.attn.wo.numel(); i += 11)
        blk.attn.wo.raw_data()[i] = 0.2;
    std::vector<Tensor> blk_leaves{etok};
    for (const auto& p : blk_store.items()) blk_leaves.push_back(p->tensor);
    out.push_back(finite_diff_check(
        "attention_block",
        [&] {
            Tensor y = attention_block(etok, blk);
            return sum(y * y);
        },
        blk_leaves, GradCheckOptions{1e-5, 1e-4, 4}));
    return out;
}

std::vector<GradCheckResult> loss_checks() {
    std::vector<GradCheckResult> out;
    Rng rng(18);

    Tensor fa = randt(rng, {3, 6});
    Tensor fb = randt(rng, {4, 6});
    out.push_back(finite_diff_check(
        "cosine matrix", [&] { return sum(cosine_similarity_clamped(fa, fb)); }, {fa, fb}));
    out.push_back(finite_diff_check(
        "l2_normalize", [&] { return sum(l2_normalize_rows(fa) * l2_normalize_rows(fa)); },
        {fa}));

    Matrix y = {{0, 1, 0, 0}, {0, 0, 0, 0}, {1, 0, 0, 0}};
    out.push_back(finite_diff_check(
        "inter_frame_loss",
        [&] { return inter_frame_loss(cosine_similarity_clamped(fa, fb), y, 0.2); }, {fa, fb}));

    MemoryBank bank;
    Rng brng(19);
    for (int64_t id = 1; id <= 3; ++id) {
        auto v = rand_uniform(brng, {6}, -1.0, 1.0);
        bank.update(id, v.data());
    }
    std::vector<int64_t> ids{1, 3, 2};
    out.push_back(finite_diff_check(
        "memory_loss",
        [&] {
            std::vector<Tensor> feats;
            for (int64_t i = 0; i < 3; ++i) feats.push_back(slice(fa, 0, i, 1));
            return memory_loss(bank, feats, ids, 0.3);
        },
        {fa}));

    std::vector<int64_t> ids_cur{1, 2, 3}, ids_prev{2, 1, 3};
    out.push_back(finite_diff_check(
        "inner_frame_triplet_loss",
        [&] {
            std::vector<Tensor> cur, prev;
            for (int64_t i = 0; i < 3; ++i) cur.push_back(slice(fa, 0, i, 1));
            for (int64_t i = 0; i < 3; ++i) prev.push_back(slice(fb, 0, i, 1));
            return inner_frame_triplet_loss(cur, prev, ids_cur, ids_prev, 0.3);
        },
        {fa, fb}));

    Tensor ga = randt(rng, {2, 5});
    Tensor gb = randt(rng, {2, 5});
    std::vector<double> labels{1.0, 0.0};
    out.push_back(finite_diff_check(
        "asso_loss",
        [&] {
            Tensor s0 = cosine_similarity_clamped(slice(ga, 0, 0, 1), slice(gb, 0, 0, 1));
            Tensor s1 = cosine_similarity_clamped(slice(ga, 0, 1, 1), slice(gb, 0, 1, 1));
            return asso_loss(concat({reshape(s0, {1}), reshape(s1, {1})}, 0), labels);
        },
        {ga, gb}));

    Tensor l1 = randt(rng, {}, 0.2, 1.5);
    Tensor l2v = randt(rng, {}, 0.2, 1.5);
    Tensor l3 = randt(rng, {}, 0.2, 1.5);
    out.push_back(finite_diff_check(
        "total_loss", [&] { return total_loss(l1, l2v, l3, 0.2, 1.0); }, {l1, l2v, l3}));
    return out;
}

// Eq-style composed checks: the full short-term training loss through every
// SSFL parameter, and the tracklet pair loss through every MSFL parameter.
std::vector<GradCheckResult> composed_model_checks() {
    std::vector<GradCheckResult> out;

    SsflConfig scfg;
    scfg.model_dim = 8;
    scfg.heads = 2;
    scfg.ffn_dim = 12;
    scfg.encoder_depth = 1;
    scfg.map_channels = 4;
    scfg.fused_hidden = 4;
    scfg.pyramid_channels = {3, 3, 3};
    scfg.h1 = 4;
    scfg.w1 = 4;
    SsflModel model(scfg, 21);

    ScenarioConfig scen;
    scen.image_w = 32;
    scen.image_h = 32;
    scen.targets = 2;
    scen.frames = 16;
    scen.min_size = 8;
    scen.max_size = 12;
    scen.occlusion_events = 0;
    scen.signature_dim = 3;
    scen.seed = 5;
    GroundTruth gt = generate_scenario(scen);

    FeaturePyramid p0 = render_pyramid(gt, 3);
    FeaturePyramid p1 = render_pyramid(gt, 4);
    FeaturePyramid p2 = render_pyramid(gt, 5);
    std::vector<Box> boxes_prev{gt.targets[0].boxes[4], gt.targets[1].boxes[4]};
    std::vector<Box> boxes_cur{gt.targets[0].boxes[5], gt.targets[1].boxes[5]};
    std::vector<int64_t> ids{1, 2};

    MemoryBank bank;
    {
        NoGradGuard ng;
        IdAwareMap m = model.forward(p1, p2);
        Tensor f = model.extract_short_term(m, boxes_cur, Mode::Train);
        for (int64_t i = 0; i < 2; ++i) bank.update(ids[i], slice(f, 0, i, 1).data());
    }

    auto ssfl_loss = [&] {
        IdAwareMap map_prev = model.forward(p0, p1);
        IdAwareMap map_cur = model.forward(p1, p2);
        Tensor f_prev = model.extract_short_term(map_prev, boxes_prev, Mode::Train);
        Tensor f_cur = model.extract_short_term(map_cur, boxes_cur, Mode::Train);
        Tensor s = short_term_similarity(f_prev, f_cur);
        Tensor inter = inter_frame_loss(s, label_matrix(ids, ids), 0.1);
        std::vector<Tensor> rc{slice(f_cur, 0, 0, 1), slice(f_cur, 0, 1, 1)};
        std::vector<Tensor> rp{slice(f_prev, 0, 0, 1), slice(f_prev, 0, 1, 1)};
        Tensor memo = memory_loss(bank, rc, ids, 0.1);
        Tensor inner = inner_frame_triplet_loss(rc, rp, ids, ids, 0.3);
        return total_loss(inter, memo, inner, 0.2, 1.0);
    };
    std::vector<Tensor> ssfl_leaves;
    for (const auto& p : model.params().items())
        if (p->trainable) ssfl_leaves.push_back(p->tensor);
    out.push_back(finite_diff_check("ssfl total loss (all params)", ssfl_loss, ssfl_leaves,
                                    GradCheckOptions{1e-5, 1e-4, 3}));

    auto inter_only = [&] {
        IdAwareMap map_prev = model.forward(p0, p1);
        IdAwareMap map_cur = model.forward(p1, p2);
        Tensor f_prev = model.extract_short_term(map_prev, boxes_prev, Mode::Train);
        Tensor f_cur = model.extract_short_term(map_cur, boxes_cur, Mode::Train);
        Tensor s = short_term_similarity(f_prev, f_cur);
        return inter_frame_loss(s, label_matrix(ids, ids), 0.1, model.no_match_logit());
    };
    out.push_back(finite_diff_check("ssfl inter-frame loss (all params)", inter_only,
                                    ssfl_leaves, GradCheckOptions{1e-5, 1e-4, 3}));
    // gradient must reach both frames' pyramids as well
    Tensor lvl_prev = p1.levels[0].set_requires_grad(true);
    Tensor lvl_cur = p2.levels[0].set_requires_grad(true);
    out.push_back(finite_diff_check("ssfl loss wrt pyramid inputs", ssfl_loss,
                                    {lvl_prev, lvl_cur}, GradCheckOptions{1e-5, 1e-4, 5}));

    MsflConfig mcfg;
    mcfg.dim = 6;
    mcfg.heads = 2;
    mcfg.blocks = 3;
    mcfg.tau = 4;
    MsflModel msfl(mcfg, 22);
    Rng rng(23);
    CropStack front;
    front.kind = BankKind::Lost;
    front.crops = rand_uniform(rng, {4, 6, 4, 4}, -1.0, 1.0);
    CropStack rear;
    rear.kind = BankKind::Candidate;
    rear.crops = rand_uniform(rng, {4, 6, 4, 4}, -1.0, 1.0);
    CropStack rear2;
    rear2.kind = BankKind::Candidate;
    rear2.crops = add_scalar(front.crops, 0.05).detach();

    auto msfl_loss = [&] {
        Tensor gf = msfl.tracklet_feature(front);
        Tensor gr = msfl.tracklet_feature(rear);
        Tensor gr2 = msfl.tracklet_feature(rear2);
        Tensor s_neg = cosine_similarity_clamped(reshape(gf, {1, 6}), reshape(gr, {1, 6}));
        Tensor s_pos = cosine_similarity_clamped(reshape(gf, {1, 6}), reshape(gr2, {1, 6}));
        return asso_loss(concat({reshape(s_pos, {1}), reshape(s_neg, {1})}, 0), {1.0, 0.0});
    };
    std::vector<Tensor> msfl_leaves;
    for (const auto& p : msfl.params().items())
        if (p->trainable) msfl_leaves.push_back(p->tensor);
    out.push_back(finite_diff_check("msfl pair loss (all params)", msfl_loss, msfl_leaves,
                                    GradCheckOptions{1e-5, 1e-4, 3}));
    return out;
}

}  // namespace

std::vector<GradCheckResult> run_standard_gradient_checks() {
    std::vector<GradCheckResult> all;
    auto append = [&](std::vector<GradCheckResult> batch) {
        for (auto& r : batch) all.push_back(std::move(r));
    };
    append(elementwise_checks());
    append(shape_reduction_checks());
    append(linalg_spatial_checks());
    append(layer_checks());
    append(loss_checks());
    append(composed_model_checks());
    return all;
}

// ---- verification suite ----

namespace {

struct Reporter {
    std::ostream& out;
    VerifySummary sum;
    void check(const std::string& name, bool ok, const std::string& detail = "") {
        out << (ok ? "[ok]   " : "[FAIL] ") << name;
        if (!detail.empty()) out << "  (" << detail << ")";
        out << '\n';
        ok ? ++sum.passed : ++sum.failed;
    }
};

}  // namespace

VerifySummary run_verification(std::ostream& out) {
    Reporter rep{out, {}};

    for (const auto& r : run_standard_gradient_checks())
        rep.check("grad: " + r.name, r.ok,
                  "max rel err " + std::to_string(r.max_rel_err) + ", " +
                      std::to_string(r.probes) + " probes");

    {
        Rng rng(99);
        bool all_ok = true;
        double worst = 0.0;
        for (int trial = 0; trial < 200; ++trial) {
            int m = static_cast<int>(rng.uniform_int(1, 5));
            int n = static_cast<int>(rng.uniform_int(1, 5));
            Matrix cost(m, std::vector<double>(n));
            for (auto& row : cost)
                for (double& v : row) v = rng.uniform(0.0, 10.0);
            double opt = hungarian(cost).total_score;
            double ref = brute_force_assignment_cost(cost);
            worst = std::max(worst, std::fabs(opt - ref));
            if (opt != ref) all_ok = false;
        }
        rep.check("hungarian vs brute force (200 trials)", all_ok,
                  "max deviation " + std::to_string(worst));
    }

    {
        // hand-worked metric scenarios (see tests for the derivations)
        std::vector<MotRecord> gt, res;
        for (int64_t f = 1; f <= 10; ++f) {
            gt.push_back({f, 1, 0, 0, 10, 10, 1});
            gt.push_back({f, 2, 100, 0, 10, 10, 1});
            res.push_back({f, f <= 4 ? 11 : 33, 0, 0, 10, 10, 1});
            res.push_back({f, 22, 100, 0, 10, 10, 1});
        }
        EvalReport r = evaluate(gt, res);
        bool ok = r.idsw == 1 && r.fp == 0 && r.fn == 0 && r.frag == 0 &&
                  std::fabs(r.mota - 0.95) < 1e-12 && std::fabs(r.idf1 - 0.8) < 1e-12;
        rep.check("clearmot/idf1 id-reassignment case", ok,
                  "mota " + std::to_string(r.mota) + " idsw " + std::to_string(r.idsw));

        EvalReport self = evaluate(gt, gt);
        rep.check("clearmot identity case",
                  self.mota == 1.0 && self.idf1 == 1.0 && self.fp == 0 && self.fn == 0);
    }

    {
        TrackletBanks banks(BankConfig{100, 20, 4});
        banks.add_candidate({7, 100});
        bool alive_at_120 = true, evicted_at_121 = false;
        for (int64_t f = 101; f <= 121; ++f) {
            banks.evict_aged(f);
            if (f == 120) alive_at_120 = banks.contains(7);
            if (f == 121) evicted_at_121 = !banks.contains(7);
        }
        rep.check("candidate eviction strictly after 20 frames", alive_at_120 && evicted_at_121);

        TrackletBanks lost_bank(BankConfig{100, 20, 4});
        CropStack stack;
        stack.crops = Tensor::zeros({4, 2, 4, 4});
        lost_bank.add_lost({3, 50, stack});
        lost_bank.evict_aged(150);
        bool alive = lost_bank.contains(3);
        lost_bank.evict_aged(151);
        rep.check("lost eviction after the 100-frame horizon",
                  alive && !lost_bank.contains(3));
    }

    {
        Rng rng(123);
        bool ok = true;
        for (int trial = 0; trial < 10000 && ok; ++trial) {
            MemoryBank bank;
            int64_t k = rng.uniform_int(1, 6);
            for (int64_t id = 1; id <= k; ++id) {
                auto v = rand_uniform(rng, {16}, -1.0, 1.0);
                bank.update(id, v.data());
            }
            auto f = rand_uniform(rng, {16}, -1.0, 1.0);
            int64_t id = rng.uniform_int(1, k);
            double alpha = bank.update(id, f.data());
            ok = alpha > 0.0 && alpha <= 1.0;
        }
        rep.check("memory ratio in (0,1] over 10^4 updates", ok);
    }

    return rep.sum;
}

}  // namespace mot
