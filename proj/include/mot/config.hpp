#pragma once

#include <string>

#include <json.hpp>

#include "mot/msfl.hpp"
#include "mot/ssfl.hpp"
#include "mot/synth.hpp"
#include "mot/tracker.hpp"

namespace mot {

/// Training hyperparameters shared by both stages.
struct TrainConfig {
    double lambda1 = 0.2;  // memory loss weight
    double lambda2 = 1.0;  // inner-frame loss weight
    double triplet_margin = 0.3;
    double inter_temperature = 0.1;  // logit scale for the inter-frame loss
    double memo_temperature = 0.1;   // logit scale for the memory loss
    double lr = 1e-3;
    double lr_decay = 0.1;          // multiplier applied at lr_decay_at
    double lr_decay_at = 0.7;       // fraction of iterations
    int64_t iterations = 500;
    double holdout_fraction = 0.25;
    uint64_t seed = 1;
};

/// One config to rule every command; sections correspond to the modules.
struct Config {
    ScenarioConfig scenario;
    TrackerConfig tracker;
    TrainConfig train;
    int64_t ssfl_model_dim = 256;
    int64_t ssfl_heads = 4;
    int64_t ssfl_ffn_dim = 512;
    int64_t ssfl_depth = 1;
    bool ssfl_shared_encoder = false;
    int64_t map_channels = 128;
    int64_t msfl_heads = 4;
    int64_t msfl_blocks = 3;
    uint64_t init_seed = 42;
};

/// Scenario sized for the tracking benchmark (the compiled-in default).
Config default_config();

/// Scenario sized for desk-scale training runs: small image, few targets,
/// 128-channel signatures so rendered maps feed MSFL directly.
Config train_preset();

nlohmann::json config_to_json(const Config& c);

/// Merges a (possibly partial) JSON document over `c`. Unknown keys raise.
void apply_json_overlay(Config& c, const nlohmann::json& j);

Config load_config_file(const std::string& path, const Config& base);

/// SSFL geometry implied by a scenario plus model dims from the config.
SsflConfig make_ssfl_config(const Config& c);
MsflConfig make_msfl_config(const Config& c);

}  // namespace mot
