#include "mot/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mot/rng.hpp"

namespace mot {

namespace {
constexpr uint64_t kStreamScenario = 0x5c11a310;
constexpr uint64_t kStreamRender = 0x4e4d3;
constexpr uint64_t kStreamDets = 0xde75;
}  // namespace

void ScenarioConfig::validate() const {
    if (image_w < 16 || image_h < 16)
        throw std::invalid_argument("scenario: image must be at least 16x16");
    if (frames < 1) throw std::invalid_argument("scenario: frames must be >= 1");
    if (targets < 0) throw std::invalid_argument("scenario: negative target count");
    if (min_size <= 0 || max_size < min_size)
        throw std::invalid_argument("scenario: bad size range");
    if (max_size >= static_cast<double>(std::min(image_w, image_h)))
        throw std::invalid_argument("scenario: targets cannot fit in the image");
    for (double rate : {miss_prob, fp_rate})
        if (rate < 0.0 || rate > 1.0)
            throw std::invalid_argument("scenario: rates must lie in [0,1]");
    if (occlusion_min < 1 || occlusion_max < occlusion_min)
        throw std::invalid_argument("scenario: occlusion durations must be >= 1");
    if (occlusion_events > 0 && frames < occlusion_max + 12)
        throw std::invalid_argument(
            "scenario: sequence too short for the configured occlusions");
    if (signature_dim < 2) throw std::invalid_argument("scenario: signature_dim must be >= 2");
}

namespace {

std::vector<double> sample_signature(Rng& rng, int64_t dim) {
    std::vector<double> v(dim);
    double norm = 0.0;
    for (double& x : v) {
        x = rng.normal(0.0, 1.0);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

}  // namespace

GroundTruth generate_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    GroundTruth gt;
    gt.cfg = cfg;
    Rng rng(Rng::mix(cfg.seed, kStreamScenario));

    // pairwise-separated appearance signatures
    std::vector<std::vector<double>> sigs;
    for (int64_t i = 0; i < cfg.targets; ++i) {
        int attempts = 0;
        while (true) {
            if (++attempts > 10000)
                throw std::invalid_argument(
                    "scenario: cannot place separable signatures; raise signature_dim");
            auto cand = sample_signature(rng, cfg.signature_dim);
            bool ok = true;
            for (const auto& s : sigs)
                if (dot(cand, s) >= 0.5) {
                    ok = false;
                    break;
                }
            if (ok) {
                sigs.push_back(std::move(cand));
                break;
            }
        }
    }

    for (int64_t i = 0; i < cfg.targets; ++i) {
        TargetTruth t;
        t.signature = sigs[i];
        double w = rng.uniform(cfg.min_size, cfg.max_size);
        double h = rng.uniform(cfg.min_size, cfg.max_size);
        double max_x = static_cast<double>(cfg.image_w) - w;
        double max_y = static_cast<double>(cfg.image_h) - h;
        double x = rng.uniform(0.0, max_x);
        double y = rng.uniform(0.0, max_y);
        double vx = rng.uniform(-cfg.max_speed, cfg.max_speed);
        double vy = rng.uniform(-cfg.max_speed, cfg.max_speed);
        double amp_x = rng.uniform(0.0, cfg.wobble_amp);
        double amp_y = rng.uniform(0.0, cfg.wobble_amp);
        double freq_x = rng.uniform(0.05, 0.2);
        double freq_y = rng.uniform(0.05, 0.2);
        double phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
        double phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);

        for (int64_t f = 0; f < cfg.frames; ++f) {
            double wx = amp_x * std::sin(2.0 * std::numbers::pi * freq_x * f + phase_x);
            double wy = amp_y * std::sin(2.0 * std::numbers::pi * freq_y * f + phase_y);
            Box b{std::clamp(x + wx, 0.0, max_x), std::clamp(y + wy, 0.0, max_y), w, h};
            t.boxes.push_back(b);
            t.visible.push_back(true);
            x += vx;
            y += vy;
            if (x < 0.0) { x = -x; vx = -vx; }
            if (x > max_x) { x = 2.0 * max_x - x; vx = -vx; }
            if (y < 0.0) { y = -y; vy = -vy; }
            if (y > max_y) { y = 2.0 * max_y - y; vy = -vy; }
        }
        gt.targets.push_back(std::move(t));
    }

    // scripted occlusions; spans stay clear of the sequence ends so a lost
    // target always exists before and reappears after
    for (int64_t e = 0; e < cfg.occlusion_events && cfg.targets > 0; ++e) {
        OcclusionEvent ev;
        ev.target = rng.uniform_int(0, cfg.targets - 1);
        int64_t dur = rng.uniform_int(cfg.occlusion_min, cfg.occlusion_max);
        ev.start = rng.uniform_int(5, cfg.frames - dur - 6);
        ev.end = ev.start + dur - 1;
        for (int64_t f = ev.start; f <= ev.end; ++f) gt.targets[ev.target].visible[f] = false;
        gt.events.push_back(ev);
    }
    return gt;
}

namespace {

// paints the signature over the box footprint in grid-index space; the cell
// range covers every bilinear tap a RoI sample inside the box can touch
void paint_target(std::vector<double>& map, int64_t c, int64_t h, int64_t w, const Box& box,
                  double stride, double value, double sig_noise, Rng& rng) {
    double u_lo = box.x / stride - 0.5, u_hi = (box.x + box.w) / stride - 0.5;
    double v_lo = box.y / stride - 0.5, v_hi = (box.y + box.h) / stride - 0.5;
    int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(u_lo)), 0, w - 1);
    int64_t x1 = std::clamp<int64_t>(static_cast<int64_t>(std::ceil(u_hi)), 0, w - 1);
    int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(v_lo)), 0, h - 1);
    int64_t y1 = std::clamp<int64_t>(static_cast<int64_t>(std::ceil(v_hi)), 0, h - 1);
    double* plane = map.data() + c * h * w;
    for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x) {
            double noise = sig_noise > 0.0 ? rng.normal(0.0, sig_noise) : 0.0;
            plane[y * w + x] += value + noise;
        }
}

Tensor render_level(const GroundTruth& gt, int64_t frame, int level) {
    const auto& cfg = gt.cfg;
    double stride = 8.0 * static_cast<double>(int64_t{1} << level);
    int64_t h = cfg.grid_h(), w = cfg.grid_w();
    for (int i = 0; i < level; ++i) {
        h = (h + 1) / 2;
        w = (w + 1) / 2;
    }
    Rng rng(Rng::mix(Rng::mix(cfg.seed, kStreamRender), frame * 8 + level));
    int64_t c = cfg.signature_dim;
    std::vector<double> data(c * h * w);
    for (double& v : data) v = cfg.bg_noise > 0.0 ? rng.normal(0.0, cfg.bg_noise) : 0.0;
    for (size_t i = 0; i < gt.targets.size(); ++i) {
        const auto& t = gt.targets[i];
        if (!t.visible[frame]) continue;
        for (int64_t ch = 0; ch < c; ++ch)
            paint_target(data, ch, h, w, t.boxes[frame], stride, t.signature[ch],
                         cfg.sig_noise, rng);
    }
    return Tensor::from_data({c, h, w}, std::move(data));
}

}  // namespace

FeaturePyramid render_pyramid(const GroundTruth& gt, int64_t frame) {
    if (frame < 0 || frame >= gt.cfg.frames)
        throw std::invalid_argument("render_pyramid: frame " + std::to_string(frame) +
                                    " out of range");
    FeaturePyramid p;
    p.frame_index = frame;
    for (int k = 0; k < kPyramidLevels; ++k) {
        p.levels[k] = render_level(gt, frame, k);
        p.strides[k] = 8.0 * static_cast<double>(int64_t{1} << k);
    }
    return p;
}

IdAwareMap render_oracle_map(const GroundTruth& gt, int64_t frame) {
    IdAwareMap m;
    m.map = render_level(gt, frame, 0);
    m.frame_index = frame;
    m.stride = 8.0;
    return m;
}

std::vector<Detection> corrupt_detections(const GroundTruth& gt, int64_t frame) {
    if (frame < 0 || frame >= gt.cfg.frames)
        throw std::invalid_argument("corrupt_detections: frame " + std::to_string(frame) +
                                    " out of range");
    const auto& cfg = gt.cfg;
    Rng rng(Rng::mix(Rng::mix(cfg.seed, kStreamDets), frame));
    std::vector<Detection> dets;

    for (size_t i = 0; i < gt.targets.size(); ++i) {
        const auto& t = gt.targets[i];
        if (!t.visible[frame]) continue;
        Box b = t.boxes[frame];
        if (cfg.det_noise > 0.0) {
            b.x += rng.normal(0.0, cfg.det_noise);
            b.y += rng.normal(0.0, cfg.det_noise);
            b.w = std::max(2.0, b.w + rng.normal(0.0, cfg.det_noise));
            b.h = std::max(2.0, b.h + rng.normal(0.0, cfg.det_noise));
        }
        bool overlapped = false;
        for (size_t j = 0; j < gt.targets.size(); ++j) {
            if (j == i || !gt.targets[j].visible[frame]) continue;
            if (iou(t.boxes[frame], gt.targets[j].boxes[frame]) > cfg.overlap_iou) {
                overlapped = true;
                break;
            }
        }
        double score;
        if (overlapped) {
            if (rng.bernoulli(cfg.miss_prob)) continue;  // missed detection
            score = rng.uniform(0.2, 0.6);
        } else {
            score = rng.uniform(0.7, 1.0);
        }
        dets.push_back({b, score, gt.identity(static_cast<int64_t>(i))});
    }

    if (cfg.fp_rate > 0.0 && rng.bernoulli(cfg.fp_rate)) {
        double w = rng.uniform(cfg.min_size, cfg.max_size);
        double h = rng.uniform(cfg.min_size, cfg.max_size);
        double x = rng.uniform(0.0, static_cast<double>(cfg.image_w) - w);
        double y = rng.uniform(0.0, static_cast<double>(cfg.image_h) - h);
        dets.push_back({Box{x, y, w, h}, rng.uniform(0.1, 0.5), -1});
    }

    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    return dets;
}

}  // namespace mot
