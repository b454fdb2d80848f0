#pragma once

#include <string>
#include <vector>

#include "mot/config.hpp"
#include "mot/losses.hpp"
#include "mot/msfl.hpp"
#include "mot/ssfl.hpp"
#include "mot/synth.hpp"

namespace mot {

struct SsflIterLog {
    int64_t iter = 0;
    double inter = 0, memo = 0, inner = 0, total = 0;
};

struct SsflTrainResult {
    std::vector<SsflIterLog> log;
    double initial_eval_inter = 0;  // inter-frame loss on the held-out pairs, untrained
    double final_eval_inter = 0;    // same pairs after training
    double holdout_argmax_accuracy = 0;  // row-argmax identity accuracy on S_short
    std::vector<std::pair<int64_t, double>> eval_trace;  // periodic held-out loss
};

/// Supervised loop over random consecutive-frame samples of the scenario.
/// Frames [0, (1-holdout)*T) feed training; the tail is held out for the
/// loss/accuracy evaluation. Throws on a non-finite loss.
SsflTrainResult train_ssfl(const GroundTruth& gt, SsflModel& model, const TrainConfig& cfg,
                           const std::string& loss_csv_path = "");

struct MsflIterLog {
    int64_t iter = 0;
    double asso = 0;
};

struct MsflTrainResult {
    std::vector<MsflIterLog> log;
    double holdout_accuracy = 0;  // pair classification at threshold 0.5
    int64_t train_pairs = 0, holdout_pairs = 0;
};

/// Tracklet-pair training: trajectories split at their occlusion events into
/// front (lost) and rear (candidate) tracklets; samples are 1 positive + 3
/// negative pairs per iteration. Crops come from rendered maps, or from the
/// SSFL model's maps when one is supplied.
MsflTrainResult train_msfl(const GroundTruth& gt, MsflModel& model, const TrainConfig& cfg,
                           SsflModel* ssfl = nullptr, const std::string& loss_csv_path = "");

}  // namespace mot
