#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mot/checks.hpp"
#include "mot/config.hpp"
#include "mot/moteval.hpp"
#include "mot/scenario_io.hpp"
#include "mot/tracker.hpp"
#include "mot/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mot;

namespace {

constexpr const char* kVersion = "0.1.0";

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    int64_t ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void write_manifest(const std::string& dir, const std::string& command, const Config& cfg,
                    uint64_t seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, int64_t wall_ms) {
    json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["seed"] = seed;
    m["config"] = config_to_json(cfg);
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["wall_clock_ms"] = wall_ms;  // timing only; all other outputs are seed-deterministic
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
    out << m.dump(2) << '\n';
}

Config build_config(const std::string& config_path, const std::string& preset) {
    Config base = preset == "train" ? train_preset() : default_config();
    if (!config_path.empty()) {
        if (!fs::exists(config_path))
            throw CLI::ValidationError("--config", "no such file: " + config_path);
        base = load_config_file(config_path, base);
    }
    return base;
}

int cmd_simulate(const std::string& out_dir, const std::string& config_path,
                 const std::string& preset, std::optional<uint64_t> seed,
                 std::optional<int64_t> targets, std::optional<int64_t> frames,
                 bool dump_pyramids) {
    Stopwatch sw;
    Config cfg = build_config(config_path, preset);
    if (seed) cfg.scenario.seed = *seed;
    if (targets) cfg.scenario.targets = *targets;
    if (frames) cfg.scenario.frames = *frames;

    GroundTruth gt = generate_scenario(cfg.scenario);
    if (cfg.scenario.targets == 0)
        std::cerr << "warning: target count is 0, ground truth will be empty\n";
    write_scenario(out_dir, gt);
    std::vector<std::string> outputs{"gt.txt", "dets.txt", "signatures.json", "scenario.json"};
    if (dump_pyramids) {
        write_pyramids((fs::path(out_dir) / "pyramids.bin").string(), gt);
        outputs.push_back("pyramids.bin");
    }
    write_manifest(out_dir, "simulate", cfg, cfg.scenario.seed, {}, outputs, sw.ms());
    std::cout << "scenario written to " << out_dir << " (" << cfg.scenario.targets
              << " targets, " << cfg.scenario.frames << " frames)\n";
    return 0;
}

int cmd_train(const std::string& stage, const std::string& scenario_dir,
              const std::string& out_ckpt, const std::string& config_path,
              std::optional<int64_t> iters, std::optional<double> lr,
              const std::string& ssfl_ckpt) {
    Stopwatch sw;
    if (!fs::exists(fs::path(scenario_dir) / scenario_files::kScenario))
        throw CLI::ValidationError("--scenario", "not a scenario directory: " + scenario_dir);
    Config cfg = build_config(config_path, "default");
    if (iters) cfg.train.iterations = *iters;
    if (lr) cfg.train.lr = *lr;

    GroundTruth gt = load_scenario(scenario_dir);
    cfg.scenario = gt.cfg;  // model geometry follows the scenario

    std::string csv = out_ckpt + ".loss.csv";
    if (stage == "ssfl") {
        SsflModel model(make_ssfl_config(cfg), cfg.init_seed);
        SsflTrainResult r = train_ssfl(gt, model, cfg.train, csv);
        model.params().save(out_ckpt);
        for (auto [it, v] : r.eval_trace)
            std::cout << "  eval@" << it << ": inter " << v << '\n';
        std::cout << "ssfl: eval inter-frame loss " << r.initial_eval_inter << " -> "
                  << r.final_eval_inter << ", held-out argmax accuracy "
                  << r.holdout_argmax_accuracy << '\n';
    } else {
        MsflModel model(make_msfl_config(cfg), cfg.init_seed + 1);
        std::optional<SsflModel> ssfl;
        if (!ssfl_ckpt.empty()) {
            ssfl.emplace(make_ssfl_config(cfg), cfg.init_seed);
            ssfl->params().load(ssfl_ckpt);
        }
        MsflTrainResult r =
            train_msfl(gt, model, cfg.train, ssfl ? &*ssfl : nullptr, csv);
        model.params().save(out_ckpt);
        std::cout << "msfl: " << r.train_pairs << " train pairs, held-out accuracy "
                  << r.holdout_accuracy << '\n';
    }
    fs::path dir = fs::path(out_ckpt).parent_path();
    if (dir.empty()) dir = ".";
    write_manifest(dir.string(), "train " + stage, cfg, cfg.train.seed, {scenario_dir},
                   {out_ckpt, csv}, sw.ms());
    return 0;
}

json counts_json(const StageCounts& c) {
    return json{{"high_dets", c.high_dets},
                {"low_dets", c.low_dets},
                {"step1_matches", c.step1_matches},
                {"step1_low_matches", c.step1_low_matches},
                {"new_tracks", c.new_tracks},
                {"lost_transitions", c.lost_transitions},
                {"step2_lost", c.step2_lost},
                {"step2_candidates", c.step2_candidates},
                {"step2_merges", c.step2_merges},
                {"evicted", c.evicted}};
}

int cmd_track(const std::string& scenario_dir, const std::string& out_dir,
              const std::string& config_path, bool oracle, const std::string& ssfl_ckpt,
              const std::string& msfl_ckpt, bool disable_msfl, const std::string& dets_path,
              const std::string& pyramids_path) {
    Stopwatch sw;
    Config cfg = build_config(config_path, "default");
    cfg.tracker.oracle_embeddings = oracle;
    if (disable_msfl) cfg.tracker.enable_msfl = false;
    if (!oracle && ssfl_ckpt.empty())
        throw CLI::ValidationError("--ssfl-ckpt",
                                   "a checkpoint is required unless --oracle-embeddings is set");

    std::optional<GroundTruth> gt;
    std::vector<FeaturePyramid> pyramids;
    if (!pyramids_path.empty()) {
        pyramids = read_pyramids(pyramids_path);
    } else {
        if (!fs::exists(fs::path(scenario_dir) / scenario_files::kScenario))
            throw CLI::ValidationError("--scenario",
                                       "not a scenario directory: " + scenario_dir);
        gt = load_scenario(scenario_dir);
        cfg.scenario = gt->cfg;
    }
    int64_t frames = gt ? gt->cfg.frames : static_cast<int64_t>(pyramids.size());

    std::vector<std::vector<Detection>> dets;
    if (!dets_path.empty()) {
        auto records = read_mot_file(dets_path);
        dets.assign(frames, {});
        for (const auto& r : records) {
            if (r.frame > frames) throw std::runtime_error("detections: frame out of range");
            dets[r.frame - 1].push_back({r.box(), r.conf, r.id});
        }
        for (auto& v : dets)
            std::stable_sort(v.begin(), v.end(), [](const Detection& a, const Detection& b) {
                return a.score > b.score;
            });
    } else {
        dets = load_detections(scenario_dir, frames);
    }

    std::optional<SsflModel> ssfl;
    std::optional<MsflModel> msfl;
    if (!oracle) {
        ssfl.emplace(make_ssfl_config(cfg), cfg.init_seed);
        ssfl->params().load(ssfl_ckpt);
        if (!msfl_ckpt.empty()) {
            msfl.emplace(make_msfl_config(cfg), cfg.init_seed + 1);
            msfl->params().load(msfl_ckpt);
        }
    }

    Tracker tracker(cfg.tracker, ssfl ? &*ssfl : nullptr, msfl ? &*msfl : nullptr);
    json frames_diag = json::array();
    json merges = json::array();
    FeaturePyramid prev_pyr;
    for (int64_t f = 0; f < frames; ++f) {
        FrameInput input;
        input.frame_index = f;
        input.detections = dets[f];
        if (oracle) {
            if (gt) {
                input.oracle_map = render_oracle_map(*gt, f);
            } else {
                IdAwareMap m;
                m.map = pyramids[f].levels[0];
                m.frame_index = f;
                m.stride = pyramids[f].strides[0];
                input.oracle_map = m;
            }
        } else {
            FeaturePyramid cur = gt ? render_pyramid(*gt, f) : pyramids[f];
            input.prev_pyramid = prev_pyr;
            input.cur_pyramid = cur;
            prev_pyr = cur;
        }
        FrameResult r = tracker.step(input);
        frames_diag.push_back(
            {{"frame", r.frame_index}, {"counts", counts_json(r.counts)}});
        for (const auto& m : r.merges)
            merges.push_back({{"frame", m.frame},
                              {"lost_id", m.lost_id},
                              {"candidate_id", m.candidate_id}});
    }

    fs::create_directories(out_dir);
    std::vector<MotRecord> records;
    for (const auto& traj : tracker.finalize())
        for (const auto& [frame, box] : traj.path) {
            MotRecord r;
            r.frame = frame + 1;
            r.id = traj.id;
            r.x = box.x;
            r.y = box.y;
            r.w = box.w;
            r.h = box.h;
            r.conf = 1.0;
            records.push_back(r);
        }
    write_mot_file((fs::path(out_dir) / "results.txt").string(), std::move(records));

    json diag;
    diag["frames"] = frames_diag;
    diag["merges"] = merges;
    diag["mode"] = oracle ? "oracle" : "trained";
    diag["msfl_enabled"] = cfg.tracker.enable_msfl;
    std::ofstream df(fs::path(out_dir) / "diagnostics.json", std::ios::trunc);
    df << diag.dump(2) << '\n';

    write_manifest(out_dir, "track", cfg, cfg.scenario.seed, {scenario_dir},
                   {"results.txt", "diagnostics.json"}, sw.ms());
    std::cout << "tracked " << frames << " frames -> " << out_dir << "/results.txt\n";
    return 0;
}

int cmd_eval(const std::string& gt_path, const std::string& res_path,
             const std::string& json_out, double iou_thresh) {
    auto gt = read_mot_file(gt_path);
    auto res = read_mot_file(res_path);
    EvalReport r = evaluate(gt, res, iou_thresh);

    std::cout << std::fixed << std::setprecision(3);
    std::cout << "MOTA  " << r.mota << "\nIDF1  " << r.idf1 << "\nFP    " << r.fp
              << "\nFN    " << r.fn << "\nIDSW  " << r.idsw << "\nFrag  " << r.frag
              << "\nMT    " << r.mt << "\nML    " << r.ml << "\nGT    " << r.gt_count
              << '\n';

    if (!json_out.empty()) {
        json j{{"mota", r.mota},   {"idf1", r.idf1}, {"fp", r.fp},
               {"fn", r.fn},       {"idsw", r.idsw}, {"frag", r.frag},
               {"mt", r.mt},       {"ml", r.ml},     {"gt_count", r.gt_count},
               {"gt_tracks", r.gt_tracks}};
        json pf = json::array();
        for (const auto& f : r.per_frame)
            pf.push_back({{"frame", f.frame},
                          {"fp", f.fp},
                          {"fn", f.fn},
                          {"idsw", f.idsw},
                          {"matches", f.matches}});
        j["per_frame"] = pf;
        std::ofstream out(json_out, std::ios::trunc);
        out << j.dump(2) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage appearance tracker: simulate, train, track, eval, verify"};
    app.require_subcommand(0, 1);
    bool dump_config = false;
    app.add_flag("--dump-config", dump_config, "print the full default config as JSON");

    auto* sim = app.add_subcommand("simulate", "generate a synthetic scenario");
    std::string sim_out, sim_cfg, sim_preset = "benchmark";
    std::optional<uint64_t> sim_seed;
    std::optional<int64_t> sim_targets, sim_frames;
    bool sim_pyr = false;
    sim->add_option("--out", sim_out, "output directory")->required();
    sim->add_option("--config", sim_cfg, "JSON config overlay");
    sim->add_option("--preset", sim_preset, "benchmark|train")
        ->check(CLI::IsMember({"benchmark", "train"}));
    sim->add_option("--seed", sim_seed, "scenario seed");
    sim->add_option("--targets", sim_targets, "target count");
    sim->add_option("--frames", sim_frames, "frame count");
    sim->add_flag("--dump-pyramids", sim_pyr, "also write pyramids.bin");

    auto* tr = app.add_subcommand("train", "train a feature-learning stage");
    std::string tr_stage, tr_scenario, tr_out, tr_cfg, tr_ssfl_ckpt;
    std::optional<int64_t> tr_iters;
    std::optional<double> tr_lr;
    tr->add_option("stage", tr_stage, "ssfl|msfl")
        ->required()
        ->check(CLI::IsMember({"ssfl", "msfl"}));
    tr->add_option("--scenario", tr_scenario, "scenario directory")->required();
    tr->add_option("--out", tr_out, "checkpoint path")->required();
    tr->add_option("--config", tr_cfg, "JSON config overlay");
    tr->add_option("--iters", tr_iters, "iteration count");
    tr->add_option("--lr", tr_lr, "learning rate");
    tr->add_option("--ssfl-ckpt", tr_ssfl_ckpt,
                   "msfl only: source maps from this trained SSFL model");

    auto* tk = app.add_subcommand("track", "run the tracker over a scenario");
    std::string tk_scenario, tk_out, tk_cfg, tk_ssfl, tk_msfl, tk_dets, tk_pyr;
    bool tk_oracle = false, tk_nomsfl = false;
    tk->add_option("--scenario", tk_scenario, "scenario directory");
    tk->add_option("--out", tk_out, "output directory")->required();
    tk->add_option("--config", tk_cfg, "JSON config overlay");
    tk->add_flag("--oracle-embeddings", tk_oracle,
                 "use rendered signature maps instead of a trained model");
    tk->add_option("--ssfl-ckpt", tk_ssfl, "SSFL checkpoint (trained mode)");
    tk->add_option("--msfl-ckpt", tk_msfl, "MSFL checkpoint (trained mode)");
    tk->add_flag("--disable-msfl", tk_nomsfl, "skip the long-term association stage");
    tk->add_option("--dets", tk_dets, "detections file overriding the scenario's dets.txt");
    tk->add_option("--pyramids", tk_pyr, "pyramid dump replacing on-the-fly rendering");

    auto* ev = app.add_subcommand("eval", "CLEAR-MOT / IDF1 evaluation");
    std::string ev_gt, ev_res, ev_json;
    double ev_iou = 0.5;
    ev->add_option("--gt", ev_gt, "ground-truth MOT file")->required();
    ev->add_option("--res", ev_res, "result MOT file")->required();
    ev->add_option("--json", ev_json, "also write the report as JSON");
    ev->add_option("--iou", ev_iou, "matching IoU threshold");

    auto* vf = app.add_subcommand("verify", "run the built-in verification suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (dump_config) {
            std::cout << config_to_json(default_config()).dump(2) << '\n';
            return 0;
        }
        if (sim->parsed())
            return cmd_simulate(sim_out, sim_cfg, sim_preset, sim_seed, sim_targets,
                                sim_frames, sim_pyr);
        if (tr->parsed())
            return cmd_train(tr_stage, tr_scenario, tr_out, tr_cfg, tr_iters, tr_lr,
                             tr_ssfl_ckpt);
        if (tk->parsed()) {
            if (tk_scenario.empty() && (tk_dets.empty() || tk_pyr.empty()))
                throw CLI::ValidationError(
                    "--scenario", "required unless both --dets and --pyramids are given");
            return cmd_track(tk_scenario, tk_out, tk_cfg, tk_oracle, tk_ssfl, tk_msfl,
                             tk_nomsfl, tk_dets, tk_pyr);
        }
        if (ev->parsed()) {
            if (!fs::exists(ev_gt)) throw CLI::ValidationError("--gt", "no such file: " + ev_gt);
            if (!fs::exists(ev_res))
                throw CLI::ValidationError("--res", "no such file: " + ev_res);
            return cmd_eval(ev_gt, ev_res, ev_json, ev_iou);
        }
        if (vf->parsed()) {
            VerifySummary s = run_verification(std::cout);
            std::cout << s.passed << " passed, " << s.failed << " failed\n";
            return s.ok() ? 0 : 1;
        }
        std::cout << app.help();
        return 2;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
