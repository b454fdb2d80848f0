#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "mot/moteval.hpp"
#include "mot/synth.hpp"
#include "mot/tracker.hpp"
#include "mot/train.hpp"
#include "testutil.hpp"

using namespace mot;

namespace {

ScenarioConfig crossing_config() {
    ScenarioConfig cfg;
    cfg.image_w = 128;
    cfg.image_h = 64;
    cfg.targets = 2;
    cfg.frames = 60;
    cfg.min_size = 12;
    cfg.max_size = 14;
    cfg.occlusion_events = 0;
    cfg.det_noise = 0.0;
    cfg.miss_prob = 0.0;
    cfg.fp_rate = 0.0;
    cfg.bg_noise = 0.02;
    cfg.sig_noise = 0.0;
    cfg.signature_dim = 8;
    cfg.seed = 3;
    return cfg;
}

// two targets crossing horizontally, one hidden for frames [25, 39]
GroundTruth crossing_truth() {
    ScenarioConfig cfg = crossing_config();
    GroundTruth gt = generate_scenario(cfg);
    for (int64_t f = 0; f < cfg.frames; ++f) {
        double t = static_cast<double>(f);
        gt.targets[0].boxes[f] = Box{4 + 1.8 * t, 10, 13, 13};
        gt.targets[1].boxes[f] = Box{112 - 1.8 * t, 38, 13, 13};
        gt.targets[0].visible[f] = true;
        gt.targets[1].visible[f] = !(f >= 25 && f <= 39);
    }
    gt.events = {{1, 25, 39}};
    return gt;
}

std::vector<FrameResult> run_oracle(const GroundTruth& gt, TrackerConfig cfg,
                                    Tracker& tracker) {
    std::vector<FrameResult> out;
    for (int64_t f = 0; f < gt.cfg.frames; ++f) {
        FrameInput input;
        input.frame_index = f;
        input.detections = corrupt_detections(gt, f);
        input.oracle_map = render_oracle_map(gt, f);
        out.push_back(tracker.step(input));
    }
    return out;
}

}  // namespace

TEST_CASE("a frame without detections loses every active track") {
    GroundTruth gt = crossing_truth();
    TrackerConfig cfg;
    cfg.oracle_embeddings = true;
    Tracker tracker(cfg, nullptr, nullptr);

    FrameInput f0;
    f0.frame_index = 0;
    f0.detections = corrupt_detections(gt, 0);
    f0.oracle_map = render_oracle_map(gt, 0);
    FrameResult r0 = tracker.step(f0);
    CHECK(r0.active.size() == 2);

    FrameInput f1;
    f1.frame_index = 1;
    f1.oracle_map = render_oracle_map(gt, 1);
    FrameResult r1 = tracker.step(f1);
    CHECK(r1.active.empty());
    CHECK(r1.counts.lost_transitions == 2);
}

TEST_CASE("single overlapping detection keeps its identity") {
    GroundTruth gt = crossing_truth();
    TrackerConfig cfg;
    cfg.oracle_embeddings = true;
    Tracker tracker(cfg, nullptr, nullptr);
    int id0 = -1;
    for (int64_t f = 0; f < 10; ++f) {
        FrameInput input;
        input.frame_index = f;
        Detection d{gt.targets[0].boxes[f], 0.95, 1};
        input.detections = {d};
        input.oracle_map = render_oracle_map(gt, f);
        FrameResult r = tracker.step(input);
        REQUIRE(r.active.size() == 1);
        if (f == 0)
            id0 = r.active[0].id;
        else
            CHECK(r.active[0].id == id0);
    }
}

TEST_CASE("step rejects out-of-order frames and malformed detections") {
    TrackerConfig cfg;
    cfg.oracle_embeddings = true;
    Tracker tracker(cfg, nullptr, nullptr);
    GroundTruth gt = crossing_truth();
    FrameInput input;
    input.frame_index = 5;
    input.oracle_map = render_oracle_map(gt, 5);
    tracker.step(input);

    FrameInput bad;
    bad.frame_index = 5;  // not increasing
    bad.oracle_map = render_oracle_map(gt, 5);
    CHECK_THROWS_AS(tracker.step(bad), std::invalid_argument);

    FrameInput bad2;
    bad2.frame_index = 6;
    bad2.detections = {{Box{0, 0, -1, 5}, 0.9, -1}};
    bad2.oracle_map = render_oracle_map(gt, 6);
    CHECK_THROWS_AS(tracker.step(bad2), std::invalid_argument);

    FrameInput bad3;
    bad3.frame_index = 7;
    bad3.detections = {{Box{0, 0, 5, 5}, 0.3, -1}, {Box{8, 8, 5, 5}, 0.9, -1}};
    bad3.oracle_map = render_oracle_map(gt, 7);
    CHECK_THROWS_AS(tracker.step(bad3), std::invalid_argument);
}

TEST_CASE("occluded target is re-identified by the long-term stage") {
    GroundTruth gt = crossing_truth();
    TrackerConfig cfg;
    cfg.oracle_embeddings = true;
    Tracker tracker(cfg, nullptr, nullptr);
    auto results = run_oracle(gt, cfg, tracker);

    int64_t merges = 0;
    for (const auto& r : results) merges += r.counts.step2_merges;
    CHECK(merges == 1);

    auto trajs = tracker.finalize();
    REQUIRE(trajs.size() == 2);  // exactly two identities survive

    // the re-identified trajectory spans both sides of the occlusion
    bool spans = false;
    for (const auto& t : trajs) {
        bool before = false, after = false;
        for (auto& [f, b] : t.path) {
            before |= f < 25;
            after |= f > 39;
        }
        spans |= before && after;
    }
    CHECK(spans);
}

TEST_CASE("merged identities never coexist in a frame") {
    GroundTruth gt = crossing_truth();
    TrackerConfig cfg;
    cfg.oracle_embeddings = true;
    Tracker tracker(cfg, nullptr, nullptr);
    auto results = run_oracle(gt, cfg, tracker);

    std::vector<std::pair<int, int>> merged;
    for (const auto& r : results)
        for (const auto& m : r.merges) merged.emplace_back(m.lost_id, m.candidate_id);
    REQUIRE(!merged.empty());

    std::map<int64_t, std::set<int>> ids_at_frame;
    for (const auto& t : tracker.finalize())
        for (auto& [f, b] : t.path) {
            auto [it, fresh] = ids_at_frame[f].insert(t.id);
            CHECK(fresh);  // identity uniqueness per frame
        }
    for (auto [lost, cand] : merged)
        for (auto& [f, ids] : ids_at_frame)
            CHECK_FALSE((ids.count(lost) && ids.count(cand)));
}

TEST_CASE("id snapshots within a frame are unique and sorted") {
    GroundTruth gt = crossing_truth();
    TrackerConfig cfg;
    cfg.oracle_embeddings = true;
    Tracker tracker(cfg, nullptr, nullptr);
    for (const auto& r : run_oracle(gt, cfg, tracker))
        for (size_t i = 1; i < r.active.size(); ++i)
            CHECK(r.active[i].id > r.active[i - 1].id);
}

TEST_CASE("tracker runs are deterministic") {
    GroundTruth gt = crossing_truth();
    TrackerConfig cfg;
    cfg.oracle_embeddings = true;
    auto run = [&] {
        Tracker tracker(cfg, nullptr, nullptr);
        auto results = run_oracle(gt, cfg, tracker);
        std::vector<double> flat;
        for (const auto& t : tracker.finalize())
            for (auto& [f, b] : t.path) {
                flat.push_back(static_cast<double>(t.id));
                flat.push_back(static_cast<double>(f));
                flat.push_back(b.x);
                flat.push_back(b.y);
            }
        return flat;
    };
    CHECK(run() == run());
}

TEST_CASE("short tracks are dropped by finalize") {
    TrackerConfig cfg;
    cfg.oracle_embeddings = true;
    cfg.enable_msfl = false;
    Tracker tracker(cfg, nullptr, nullptr);
    GroundTruth gt = crossing_truth();

    // one strong detection appearing for a single frame far from the targets
    FrameInput f0;
    f0.frame_index = 0;
    f0.detections = {{Box{60, 50, 12, 12}, 0.95, -1}};
    f0.oracle_map = render_oracle_map(gt, 0);
    tracker.step(f0);
    FrameInput f1;
    f1.frame_index = 1;
    f1.oracle_map = render_oracle_map(gt, 1);
    tracker.step(f1);

    CHECK(tracker.finalize().empty());  // 1-frame track < min length 2
}

TEST_CASE("recently lost tracks can rejoin stage 1 when the flag is on") {
    GroundTruth gt = crossing_truth();
    // hide target 0's detections for frames 10-11 only
    auto dets_at = [&](int64_t f) {
        auto dets = corrupt_detections(gt, f);
        if (f == 10 || f == 11)
            dets.erase(std::remove_if(dets.begin(), dets.end(),
                                      [](const Detection& d) { return d.gt_id == 1; }),
                       dets.end());
        return dets;
    };
    auto run = [&](bool lost_in_step1) {
        TrackerConfig cfg;
        cfg.oracle_embeddings = true;
        cfg.enable_msfl = false;
        cfg.lost_in_step1 = lost_in_step1;
        Tracker tracker(cfg, nullptr, nullptr);
        for (int64_t f = 0; f < 20; ++f) {
            FrameInput input;
            input.frame_index = f;
            input.detections = dets_at(f);
            input.oracle_map = render_oracle_map(gt, f);
            tracker.step(input);
        }
        return tracker.finalize().size();
    };
    CHECK(run(true) == 2);   // the 2-frame gap is bridged by appearance
    CHECK(run(false) == 3);  // without the flag a new identity is spawned
}

TEST_CASE("zero training iterations leave the checkpoint at initialization") {
    namespace fs = std::filesystem;
    ScenarioConfig scen;
    scen.image_w = 48;
    scen.image_h = 48;
    scen.targets = 3;
    scen.frames = 40;
    scen.min_size = 8;
    scen.max_size = 12;
    scen.occlusion_events = 0;
    scen.signature_dim = 4;
    scen.seed = 12;
    GroundTruth gt = generate_scenario(scen);

    SsflConfig mcfg;
    mcfg.model_dim = 8;
    mcfg.heads = 2;
    mcfg.ffn_dim = 12;
    mcfg.map_channels = 4;
    mcfg.fused_hidden = 4;
    mcfg.pyramid_channels = {4, 4, 4};
    mcfg.h1 = 6;
    mcfg.w1 = 6;

    fs::path before = fs::temp_directory_path() / "mot_init_before.bin";
    fs::path after = fs::temp_directory_path() / "mot_init_after.bin";
    SsflModel model(mcfg, 99);
    model.params().save(before.string());
    TrainConfig tcfg;
    tcfg.iterations = 0;
    train_ssfl(gt, model, tcfg);
    model.params().save(after.string());

    std::ifstream f1(before, std::ios::binary), f2(after, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    fs::remove(before);
    fs::remove(after);
}

TEST_CASE("noiseless oracle run reproduces the ground truth") {
    ScenarioConfig scfg;
    scfg.image_w = 128;
    scfg.image_h = 128;
    scfg.targets = 5;
    scfg.frames = 80;
    scfg.min_size = 10;  // small enough that no two targets ever overlap
    scfg.max_size = 13;
    scfg.occlusion_events = 2;
    scfg.occlusion_min = 8;
    scfg.occlusion_max = 12;
    scfg.det_noise = 0.0;
    scfg.miss_prob = 0.0;
    scfg.fp_rate = 0.0;
    scfg.sig_noise = 0.0;
    scfg.bg_noise = 0.05;
    scfg.seed = 2;
    GroundTruth gt = generate_scenario(scfg);

    TrackerConfig cfg;
    cfg.oracle_embeddings = true;
    Tracker tracker(cfg, nullptr, nullptr);
    run_oracle(gt, cfg, tracker);

    std::vector<MotRecord> res, gtr;
    for (const auto& t : tracker.finalize())
        for (auto& [f, b] : t.path) res.push_back({f + 1, t.id, b.x, b.y, b.w, b.h, 1.0});
    for (size_t i = 0; i < gt.targets.size(); ++i)
        for (int64_t f = 0; f < scfg.frames; ++f)
            if (gt.targets[i].visible[f]) {
                const Box& b = gt.targets[i].boxes[f];
                gtr.push_back({f + 1, gt.identity(static_cast<int64_t>(i)), b.x, b.y, b.w,
                               b.h, 1.0});
            }
    EvalReport r = evaluate(gtr, res);
    CHECK(r.mota == 1.0);
    CHECK(r.idf1 == 1.0);
    CHECK(r.fp == 0);
    CHECK(r.fn == 0);
    CHECK(r.idsw == 0);
    // output boxes are the (noiseless) detection boxes, i.e. the gt boxes
    CHECK(res.size() == gtr.size());
    CHECK(tracker.finalize().size() == gt.targets.size());
}

TEST_CASE("enabling the long-term stage never increases identity switches") {
    ScenarioConfig scfg;
    scfg.targets = 8;
    scfg.frames = 120;
    scfg.occlusion_events = 5;
    scfg.seed = 11;
    GroundTruth gt = generate_scenario(scfg);

    auto run = [&](bool msfl) {
        TrackerConfig cfg;
        cfg.oracle_embeddings = true;
        cfg.enable_msfl = msfl;
        Tracker tracker(cfg, nullptr, nullptr);
        run_oracle(gt, cfg, tracker);
        std::vector<MotRecord> res;
        for (const auto& t : tracker.finalize())
            for (auto& [f, b] : t.path)
                res.push_back({f + 1, t.id, b.x, b.y, b.w, b.h, 1.0});
        std::vector<MotRecord> gtr;
        for (size_t i = 0; i < gt.targets.size(); ++i)
            for (int64_t f = 0; f < scfg.frames; ++f)
                if (gt.targets[i].visible[f]) {
                    const Box& b = gt.targets[i].boxes[f];
                    gtr.push_back({f + 1, gt.identity(static_cast<int64_t>(i)), b.x, b.y,
                                   b.w, b.h, 1.0});
                }
        return clearmot(gtr, res).idsw;
    };
    CHECK(run(true) <= run(false));
}
