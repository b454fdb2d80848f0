#pragma once

#include <cstdint>
#include <vector>

#include "mot/geometry.hpp"
#include "mot/ssfl.hpp"

namespace mot {

struct ScenarioConfig {
    int64_t image_w = 256, image_h = 256;
    int64_t targets = 20;
    int64_t frames = 200;
    double min_size = 18.0, max_size = 36.0;
    double max_speed = 3.0;   // px/frame per axis
    double wobble_amp = 1.0;  // bounded sinusoidal path perturbation

    int64_t occlusion_events = 10;
    int64_t occlusion_min = 10, occlusion_max = 30;

    double det_noise = 1.0;    // box jitter sigma (px)
    double miss_prob = 0.1;    // drop probability while overlapping another target
    double fp_rate = 0.1;      // per-frame false-positive probability
    double overlap_iou = 0.3;  // overlap threshold that triggers miss/downgrade

    int64_t signature_dim = 16;  // pyramid channel count
    double sig_noise = 0.05;     // noise added inside target footprints
    double bg_noise = 0.1;       // background noise sigma

    uint64_t seed = 0;

    void validate() const;  // throws on infeasible settings
    int64_t grid_h() const { return (image_h + 7) / 8; }
    int64_t grid_w() const { return (image_w + 7) / 8; }
};

struct OcclusionEvent {
    int64_t target = 0;  // index into targets
    int64_t start = 0, end = 0;  // inclusive frame span
};

struct TargetTruth {
    std::vector<Box> boxes;      // one per frame
    std::vector<bool> visible;   // one per frame
    std::vector<double> signature;  // unit vector, signature_dim entries
};

/// Scripted trajectories with per-identity appearance signatures. Identity of
/// target i is i+1 (MOT files are 1-based).
struct GroundTruth {
    ScenarioConfig cfg;
    std::vector<TargetTruth> targets;
    std::vector<OcclusionEvent> events;

    int64_t identity(int64_t target_index) const { return target_index + 1; }
};

/// Deterministic under cfg.seed. Targets bounce off the borders with constant
/// velocity plus a bounded sinusoidal wobble; occlusion events blank the
/// visibility flag over their spans.
GroundTruth generate_scenario(const ScenarioConfig& cfg);

/// Renders the three-level pyramid for one frame: Gaussian background plus
/// each visible target's signature over its (stride-scaled) box footprint.
/// Deterministic per (seed, frame, level) regardless of call order.
FeaturePyramid render_pyramid(const GroundTruth& gt, int64_t frame);

/// Level-1 rendered map packaged as the ID-aware map surrogate used by the
/// oracle-embedding mode.
IdAwareMap render_oracle_map(const GroundTruth& gt, int64_t frame);

/// Jittered, score-banded detections: clean targets score [0.7,1], targets
/// overlapping another visible target are dropped with miss_prob or demoted
/// to [0.2,0.6], false positives appear at fp_rate with scores [0.1,0.5].
/// Sorted by descending score.
std::vector<Detection> corrupt_detections(const GroundTruth& gt, int64_t frame);

}  // namespace mot
