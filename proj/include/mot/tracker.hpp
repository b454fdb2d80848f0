#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "mot/geometry.hpp"
#include "mot/kalman.hpp"
#include "mot/msfl.hpp"
#include "mot/ssfl.hpp"

namespace mot {

enum class TrackState { Active, Lost, Removed };

/// Identity-bearing trajectory with lifecycle state, motion state, and the
/// cached appearance data the two association stages read.
struct Track {
    int id = 0;
    TrackState state = TrackState::Active;
    int64_t init_frame = 0;
    int64_t last_observed = -1;  // frame of the newest box
    double score = 0.0;
    std::vector<std::pair<int64_t, Box>> boxes;  // observation history, frame ascending
    KalmanBoxFilter motion;
    CropHistory crop_cache;  // ring buffer of ID-aware-map crops
    Tensor short_feat;       // appearance row from the map of last_observed
    int absorbed_into = -1;  // id of the lost track this candidate merged into
};

struct TrackerConfig {
    double high_score = 0.6;       // BYTE first-stage detection gate
    double low_score = 0.1;        // BYTE second-stage detection gate
    double new_track_score = 0.7;  // init threshold for unmatched detections
    double lambda_app = 0.5;       // appearance weight in the fused similarity
    double theta_short = 0.3;      // acceptance gate, fused first stage
    double theta_low = 0.5;        // acceptance gate (IoU), low-score stage
    double theta_long = 0.7;       // acceptance gate, tracklet association
    int64_t max_lost_age = 100;
    int64_t candidate_max_age = 20;
    int64_t tau = 4;
    bool enable_msfl = true;
    bool lost_in_step1 = false;     // let recently lost tracks join stage 1
    int64_t lost_in_step1_frames = 3;
    int64_t min_track_length = 2;  // finalize() drops shorter tracks
    bool oracle_embeddings = false;
};

/// Per-frame tracker input. Trained mode consumes the two pyramids; oracle
/// mode consumes a precomputed map instead.
struct FrameInput {
    int64_t frame_index = 0;
    std::vector<Detection> detections;  // sorted by descending score
    FeaturePyramid prev_pyramid, cur_pyramid;
    std::optional<IdAwareMap> oracle_map;
};

struct TrackSnapshot {
    int id = 0;
    Box box;
    double score = 0.0;
};

struct MergeEvent {
    int lost_id = 0;
    int candidate_id = 0;
    int64_t frame = 0;
};

struct StageCounts {
    int64_t high_dets = 0, low_dets = 0;
    int64_t step1_matches = 0, step1_low_matches = 0;
    int64_t new_tracks = 0, lost_transitions = 0;
    int64_t step2_lost = 0, step2_candidates = 0, step2_merges = 0;
    int64_t evicted = 0;
};

struct FrameResult {
    int64_t frame_index = 0;
    std::vector<TrackSnapshot> active;  // tracks observed this frame, id ascending
    std::vector<MergeEvent> merges;
    StageCounts counts;
};

struct Trajectory {
    int id = 0;
    std::vector<std::pair<int64_t, Box>> path;
    double score = 0.0;
};

/// Online two-stage tracker: BYTE-style short-term detection association on
/// the fused appearance+IoU similarity, then long-term lost/candidate
/// tracklet association over the banks.
class Tracker {
public:
    /// ssfl may be null only in oracle-embedding mode. msfl may be null, in
    /// which case tracklet features fall back to crop averages.
    Tracker(TrackerConfig cfg, SsflModel* ssfl, MsflModel* msfl);

    FrameResult step(const FrameInput& input);

    /// Trajectories of at least min_track_length frames, merges applied.
    std::vector<Trajectory> finalize() const;

    const std::vector<std::shared_ptr<Track>>& tracks() const { return tracks_; }
    const TrackletBanks& banks() const { return banks_; }

private:
    Tensor appearance_features(const IdAwareMap& map, const std::vector<Box>& boxes);
    void observe(Track& t, int64_t frame, const Detection& det, const IdAwareMap& map,
                 const Tensor& feat_row);
    void run_long_term(int64_t frame, FrameResult& result);

    TrackerConfig cfg_;
    SsflModel* ssfl_;
    MsflModel* msfl_;
    TrackletBanks banks_;
    std::vector<std::shared_ptr<Track>> tracks_;
    int next_id_ = 1;
    int64_t last_frame_ = -1;
    IdAwareMap cur_map_;
};

}  // namespace mot
