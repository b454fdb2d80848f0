#include "mot/config.hpp"

#include <fstream>
#include <stdexcept>

namespace mot {

using nlohmann::json;

Config default_config() { return Config{}; }

Config train_preset() {
    Config c;
    c.scenario.image_w = 64;
    c.scenario.image_h = 64;
    c.scenario.targets = 5;
    c.scenario.frames = 150;
    c.scenario.min_size = 10;
    c.scenario.max_size = 18;
    c.scenario.max_speed = 2.0;
    c.scenario.wobble_amp = 1.0;
    c.scenario.occlusion_events = 8;
    c.scenario.occlusion_min = 8;
    c.scenario.occlusion_max = 20;
    c.scenario.det_noise = 0.5;
    c.scenario.miss_prob = 0.2;
    c.scenario.fp_rate = 0.05;
    c.scenario.signature_dim = 128;  // matches the MSFL token width
    c.scenario.seed = 7;
    return c;
}

namespace {

template <typename T>
void pick(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, std::initializer_list<const char*> known,
                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
    }
}

json scenario_to_json(const ScenarioConfig& s) {
    return json{{"image_w", s.image_w},
                {"image_h", s.image_h},
                {"targets", s.targets},
                {"frames", s.frames},
                {"min_size", s.min_size},
                {"max_size", s.max_size},
                {"max_speed", s.max_speed},
                {"wobble_amp", s.wobble_amp},
                {"occlusion_events", s.occlusion_events},
                {"occlusion_min", s.occlusion_min},
                {"occlusion_max", s.occlusion_max},
                {"det_noise", s.det_noise},
                {"miss_prob", s.miss_prob},
                {"fp_rate", s.fp_rate},
                {"overlap_iou", s.overlap_iou},
                {"signature_dim", s.signature_dim},
                {"sig_noise", s.sig_noise},
                {"bg_noise", s.bg_noise},
                {"seed", s.seed}};
}

void scenario_from_json(const json& j, ScenarioConfig& s) {
    check_keys(j,
               {"image_w", "image_h", "targets", "frames", "min_size", "max_size", "max_speed",
                "wobble_amp", "occlusion_events", "occlusion_min", "occlusion_max", "det_noise",
                "miss_prob", "fp_rate", "overlap_iou", "signature_dim", "sig_noise", "bg_noise",
                "seed"},
               "scenario");
    pick(j, "image_w", s.image_w);
    pick(j, "image_h", s.image_h);
    pick(j, "targets", s.targets);
    pick(j, "frames", s.frames);
    pick(j, "min_size", s.min_size);
    pick(j, "max_size", s.max_size);
    pick(j, "max_speed", s.max_speed);
    pick(j, "wobble_amp", s.wobble_amp);
    pick(j, "occlusion_events", s.occlusion_events);
    pick(j, "occlusion_min", s.occlusion_min);
    pick(j, "occlusion_max", s.occlusion_max);
    pick(j, "det_noise", s.det_noise);
    pick(j, "miss_prob", s.miss_prob);
    pick(j, "fp_rate", s.fp_rate);
    pick(j, "overlap_iou", s.overlap_iou);
    pick(j, "signature_dim", s.signature_dim);
    pick(j, "sig_noise", s.sig_noise);
    pick(j, "bg_noise", s.bg_noise);
    pick(j, "seed", s.seed);
}

json tracker_to_json(const TrackerConfig& t) {
    return json{{"high_score", t.high_score},
                {"low_score", t.low_score},
                {"new_track_score", t.new_track_score},
                {"lambda_app", t.lambda_app},
                {"theta_short", t.theta_short},
                {"theta_low", t.theta_low},
                {"theta_long", t.theta_long},
                {"max_lost_age", t.max_lost_age},
                {"candidate_max_age", t.candidate_max_age},
                {"tau", t.tau},
                {"enable_msfl", t.enable_msfl},
                {"lost_in_step1", t.lost_in_step1},
                {"lost_in_step1_frames", t.lost_in_step1_frames},
                {"min_track_length", t.min_track_length},
                {"oracle_embeddings", t.oracle_embeddings}};
}

void tracker_from_json(const json& j, TrackerConfig& t) {
    check_keys(j,
               {"high_score", "low_score", "new_track_score", "lambda_app", "theta_short",
                "theta_low", "theta_long", "max_lost_age", "candidate_max_age", "tau",
                "enable_msfl", "lost_in_step1", "lost_in_step1_frames", "min_track_length",
                "oracle_embeddings"},
               "tracker");
    pick(j, "high_score", t.high_score);
    pick(j, "low_score", t.low_score);
    pick(j, "new_track_score", t.new_track_score);
    pick(j, "lambda_app", t.lambda_app);
    pick(j, "theta_short", t.theta_short);
    pick(j, "theta_low", t.theta_low);
    pick(j, "theta_long", t.theta_long);
    pick(j, "max_lost_age", t.max_lost_age);
    pick(j, "candidate_max_age", t.candidate_max_age);
    pick(j, "tau", t.tau);
    pick(j, "enable_msfl", t.enable_msfl);
    pick(j, "lost_in_step1", t.lost_in_step1);
    pick(j, "lost_in_step1_frames", t.lost_in_step1_frames);
    pick(j, "min_track_length", t.min_track_length);
    pick(j, "oracle_embeddings", t.oracle_embeddings);
}

json train_to_json(const TrainConfig& t) {
    return json{{"lambda1", t.lambda1},
                {"lambda2", t.lambda2},
                {"triplet_margin", t.triplet_margin},
                {"inter_temperature", t.inter_temperature},
                {"memo_temperature", t.memo_temperature},
                {"lr", t.lr},
                {"lr_decay", t.lr_decay},
                {"lr_decay_at", t.lr_decay_at},
                {"iterations", t.iterations},
                {"holdout_fraction", t.holdout_fraction},
                {"seed", t.seed}};
}

void train_from_json(const json& j, TrainConfig& t) {
    check_keys(j,
               {"lambda1", "lambda2", "triplet_margin", "inter_temperature", "memo_temperature",
                "lr", "lr_decay", "lr_decay_at", "iterations", "holdout_fraction", "seed"},
               "train");
    pick(j, "lambda1", t.lambda1);
    pick(j, "lambda2", t.lambda2);
    pick(j, "triplet_margin", t.triplet_margin);
    pick(j, "inter_temperature", t.inter_temperature);
    pick(j, "memo_temperature", t.memo_temperature);
    pick(j, "lr", t.lr);
    pick(j, "lr_decay", t.lr_decay);
    pick(j, "lr_decay_at", t.lr_decay_at);
    pick(j, "iterations", t.iterations);
    pick(j, "holdout_fraction", t.holdout_fraction);
    pick(j, "seed", t.seed);
}

}  // namespace

json config_to_json(const Config& c) {
    return json{{"scenario", scenario_to_json(c.scenario)},
                {"tracker", tracker_to_json(c.tracker)},
                {"train", train_to_json(c.train)},
                {"model",
                 {{"ssfl_model_dim", c.ssfl_model_dim},
                  {"ssfl_heads", c.ssfl_heads},
                  {"ssfl_ffn_dim", c.ssfl_ffn_dim},
                  {"ssfl_depth", c.ssfl_depth},
                  {"ssfl_shared_encoder", c.ssfl_shared_encoder},
                  {"map_channels", c.map_channels},
                  {"msfl_heads", c.msfl_heads},
                  {"msfl_blocks", c.msfl_blocks},
                  {"init_seed", c.init_seed}}}};
}

void apply_json_overlay(Config& c, const json& j) {
    check_keys(j, {"scenario", "tracker", "train", "model"}, "top level");
    if (j.contains("scenario")) scenario_from_json(j.at("scenario"), c.scenario);
    if (j.contains("tracker")) tracker_from_json(j.at("tracker"), c.tracker);
    if (j.contains("train")) train_from_json(j.at("train"), c.train);
    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m,
                   {"ssfl_model_dim", "ssfl_heads", "ssfl_ffn_dim", "ssfl_depth",
                    "ssfl_shared_encoder", "map_channels", "msfl_heads", "msfl_blocks",
                    "init_seed"},
                   "model");
        pick(m, "ssfl_model_dim", c.ssfl_model_dim);
        pick(m, "ssfl_heads", c.ssfl_heads);
        pick(m, "ssfl_ffn_dim", c.ssfl_ffn_dim);
        pick(m, "ssfl_depth", c.ssfl_depth);
        pick(m, "ssfl_shared_encoder", c.ssfl_shared_encoder);
        pick(m, "map_channels", c.map_channels);
        pick(m, "msfl_heads", c.msfl_heads);
        pick(m, "msfl_blocks", c.msfl_blocks);
        pick(m, "init_seed", c.init_seed);
    }
}

Config load_config_file(const std::string& path, const Config& base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    json j = json::parse(in);
    Config c = base;
    apply_json_overlay(c, j);
    return c;
}

SsflConfig make_ssfl_config(const Config& c) {
    SsflConfig s;
    s.model_dim = c.ssfl_model_dim;
    s.heads = c.ssfl_heads;
    s.ffn_dim = c.ssfl_ffn_dim;
    s.encoder_depth = c.ssfl_depth;
    s.shared_encoder = c.ssfl_shared_encoder;
    s.map_channels = c.map_channels;
    s.pyramid_channels = {c.scenario.signature_dim, c.scenario.signature_dim,
                          c.scenario.signature_dim};
    s.h1 = c.scenario.grid_h();
    s.w1 = c.scenario.grid_w();
    s.stride = 8.0;
    return s;
}

MsflConfig make_msfl_config(const Config& c) {
    MsflConfig m;
    m.dim = c.map_channels;
    m.heads = c.msfl_heads;
    m.blocks = c.msfl_blocks;
    m.tau = c.tracker.tau;
    return m;
}

}  // namespace mot
