#include "mot/tracker.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

#include "mot/assoc.hpp"
#include "mot/losses.hpp"

namespace mot {

Tracker::Tracker(TrackerConfig cfg, SsflModel* ssfl, MsflModel* msfl)
    : cfg_(cfg),
      ssfl_(ssfl),
      msfl_(msfl),
      banks_(BankConfig{cfg.max_lost_age, cfg.candidate_max_age, cfg.tau}) {
    if (!cfg_.oracle_embeddings && ssfl_ == nullptr)
        throw std::invalid_argument("tracker: trained mode needs an SSFL model");
}

Tensor Tracker::appearance_features(const IdAwareMap& map, const std::vector<Box>& boxes) {
    if (boxes.empty()) return Tensor();
    if (cfg_.oracle_embeddings || ssfl_ == nullptr) {
        std::vector<Tensor> rows;
        for (const Box& b : boxes) {
            Tensor crop = roi_align(map.map, b, map.stride);
            rows.push_back(reshape(crop, {1, crop.numel()}));
        }
        return rows.size() == 1 ? rows[0] : concat(rows, 0);
    }
    return ssfl_->extract_short_term(map, boxes, Mode::Infer);
}

void Tracker::observe(Track& t, int64_t frame, const Detection& det, const IdAwareMap& map,
                      const Tensor& feat_row) {
    t.motion.initialized() ? t.motion.update(det.box) : t.motion.initiate(det.box);
    t.boxes.emplace_back(frame, det.box);
    t.last_observed = frame;
    t.score = det.score;
    t.short_feat = feat_row;

    Tensor crop = roi_align(map.map, det.box, map.stride).detach();
    t.crop_cache.emplace_back(frame, crop);
    // keep the birth window (candidate stacks) plus a trailing tail (lost stacks)
    size_t cap = static_cast<size_t>(cfg_.tau + 8);
    while (t.crop_cache.size() > cap)
        t.crop_cache.erase(t.crop_cache.begin() + static_cast<long>(cfg_.tau));
}

FrameResult Tracker::step(const FrameInput& input) {
    NoGradGuard inference;
    int64_t frame = input.frame_index;
    if (frame <= last_frame_)
        throw std::invalid_argument("tracker: frame indices must increase, got " +
                                    std::to_string(frame) + " after " +
                                    std::to_string(last_frame_));
    for (size_t i = 0; i < input.detections.size(); ++i) {
        const auto& d = input.detections[i];
        if (!d.box.valid())
            throw std::invalid_argument("tracker: detection " + std::to_string(i) +
                                        " has a degenerate box");
        if (i > 0 && d.score > input.detections[i - 1].score + 1e-12)
            throw std::invalid_argument("tracker: detections must be sorted by descending score");
    }
    last_frame_ = frame;

    FrameResult result;
    result.frame_index = frame;

    // (a) ID-aware map of this frame
    if (input.oracle_map.has_value()) {
        cur_map_ = *input.oracle_map;
    } else {
        const FeaturePyramid& prev =
            input.prev_pyramid.levels[0].defined() ? input.prev_pyramid : input.cur_pyramid;
        cur_map_ = ssfl_->forward(prev, input.cur_pyramid);
    }

    // split detections into the BYTE bands
    std::vector<Detection> high, low;
    for (const auto& d : input.detections) {
        if (d.score >= cfg_.high_score)
            high.push_back(d);
        else if (d.score >= cfg_.low_score)
            low.push_back(d);
    }
    result.counts.high_dets = static_cast<int64_t>(high.size());
    result.counts.low_dets = static_cast<int64_t>(low.size());

    // Kalman time update for every live track, once per frame
    std::map<int, Box> predicted;
    for (auto& t : tracks_)
        if (t->state != TrackState::Removed && t->motion.initialized())
            predicted[t->id] = t->motion.predict();

    // (b) stage 1: active (optionally recently lost) tracks vs high detections
    std::vector<Track*> pool;
    std::vector<bool> pool_is_lost;
    for (auto& t : tracks_) {
        if (t->state == TrackState::Active) {
            pool.push_back(t.get());
            pool_is_lost.push_back(false);
        } else if (t->state == TrackState::Lost && cfg_.lost_in_step1 &&
                   frame - t->last_observed <= cfg_.lost_in_step1_frames) {
            pool.push_back(t.get());
            pool_is_lost.push_back(true);
        }
    }

    std::vector<Box> high_boxes;
    for (const auto& d : high) high_boxes.push_back(d.box);
    Tensor det_feats = appearance_features(cur_map_, high_boxes);

    std::vector<bool> track_matched(pool.size(), false);
    std::vector<bool> det_matched(high.size(), false);

    if (!pool.empty() && !high.empty()) {
        std::vector<Tensor> rows;
        for (Track* t : pool) rows.push_back(reshape(t->short_feat, {1, t->short_feat.numel()}));
        Tensor track_feats = rows.size() == 1 ? rows[0] : concat(rows, 0);
        Tensor s_app_t = short_term_similarity(track_feats, det_feats);

        Matrix s_app(pool.size(), std::vector<double>(high.size()));
        for (size_t j = 0; j < pool.size(); ++j)
            for (size_t i = 0; i < high.size(); ++i)
                s_app[j][i] = s_app_t.at({static_cast<int64_t>(j), static_cast<int64_t>(i)});

        std::vector<Box> pred_boxes;
        for (Track* t : pool) pred_boxes.push_back(predicted.at(t->id));
        Matrix s_iou = iou_matrix(pred_boxes, high_boxes);
        Matrix fused = fuse_similarity(s_app, s_iou, cfg_.lambda_app);
        // a decayed lost box carries no signal; those rows match on appearance
        for (size_t j = 0; j < pool.size(); ++j)
            if (pool_is_lost[j]) fused[j] = s_app[j];

        Matching m1 = match_with_threshold(fused, cfg_.theta_short);
        for (auto [j, i] : m1.pairs) {
            Track* t = pool[j];
            if (t->state == TrackState::Lost) {  // reactivated via stage 1
                banks_.remove_track(t->id);
                t->state = TrackState::Active;
            }
            observe(*t, frame, high[i],
                    cur_map_, slice(det_feats, 0, i, 1));
            track_matched[j] = true;
            det_matched[i] = true;
        }
        result.counts.step1_matches = static_cast<int64_t>(m1.pairs.size());
    }

    // stage 1b: remaining active tracks vs low-score detections, IoU only
    std::vector<Track*> remaining;
    for (size_t j = 0; j < pool.size(); ++j)
        if (!track_matched[j] && !pool_is_lost[j]) remaining.push_back(pool[j]);
    std::vector<bool> remaining_matched(remaining.size(), false);
    if (!remaining.empty() && !low.empty()) {
        std::vector<Box> pred_boxes, low_boxes;
        for (Track* t : remaining) pred_boxes.push_back(predicted.at(t->id));
        for (const auto& d : low) low_boxes.push_back(d.box);
        Matching m2 = match_with_threshold(iou_matrix(pred_boxes, low_boxes), cfg_.theta_low);
        std::vector<Box> boxes;
        for (auto [j, i] : m2.pairs) boxes.push_back(low[i].box);
        Tensor low_feats = appearance_features(cur_map_, boxes);
        int64_t row = 0;
        for (auto [j, i] : m2.pairs) {
            observe(*remaining[j], frame, low[i], cur_map_, slice(low_feats, 0, row++, 1));
            remaining_matched[j] = true;
        }
        result.counts.step1_low_matches = static_cast<int64_t>(m2.pairs.size());
    }

    BankEvents events;

    // (c) transitions: unmatched actives go lost, strong unmatched highs spawn
    for (size_t j = 0; j < remaining.size(); ++j) {
        if (remaining_matched[j]) continue;
        Track* t = remaining[j];
        t->state = TrackState::Lost;
        ++result.counts.lost_transitions;
        banks_.remove_track(t->id);  // a bank candidate that got lost moves banks
        LostEntry entry;
        entry.track_id = t->id;
        entry.lost_frame = t->last_observed;
        entry.stack = collect_crop_stack(t->crop_cache, t->last_observed - cfg_.tau + 1,
                                         t->last_observed, BankKind::Lost);
        events.new_lost.push_back(std::move(entry));
    }
    for (size_t i = 0; i < high.size(); ++i) {
        if (det_matched[i] || high[i].score < cfg_.new_track_score) continue;
        auto t = std::make_shared<Track>();
        t->id = next_id_++;
        t->init_frame = frame;
        observe(*t, frame, high[i], cur_map_, slice(det_feats, 0, static_cast<int64_t>(i), 1));
        tracks_.push_back(t);
        events.new_candidates.push_back({t->id, frame});
        ++result.counts.new_tracks;
    }

    bank_update(banks_, events, -1);  // admissions only; ageing runs after step 2

    // (d) stage 2: long-term tracklet association over the banks
    if (cfg_.enable_msfl) run_long_term(frame, result);

    // (f) age-based eviction; lost tracklets that age out are gone for good
    auto evicted = banks_.evict_aged(frame);
    result.counts.evicted = static_cast<int64_t>(evicted.size());
    for (int id : evicted)
        for (auto& t : tracks_)
            if (t->id == id && t->state == TrackState::Lost) t->state = TrackState::Removed;

    // snapshots: tracks observed this frame
    for (const auto& t : tracks_)
        if (t->state == TrackState::Active && t->last_observed == frame)
            result.active.push_back({t->id, t->boxes.back().second, t->score});
    std::sort(result.active.begin(), result.active.end(),
              [](const TrackSnapshot& a, const TrackSnapshot& b) { return a.id < b.id; });
    return result;
}

void Tracker::run_long_term(int64_t frame, FrameResult& result) {
    const auto& lost = banks_.lost();
    const auto& cands = banks_.candidates();
    result.counts.step2_lost = static_cast<int64_t>(lost.size());
    result.counts.step2_candidates = static_cast<int64_t>(cands.size());
    if (lost.empty() || cands.empty()) return;

    std::map<int, Track*> by_id;
    for (auto& t : tracks_) by_id[t->id] = t.get();

    auto tracklet_feat = [&](const CropStack& stack) {
        if (cfg_.oracle_embeddings || msfl_ == nullptr) return oracle_tracklet_feature(stack);
        return msfl_->tracklet_feature(stack);
    };

    std::vector<Tensor> lost_feats, cand_feats;
    for (const auto& e : lost) lost_feats.push_back(tracklet_feat(e.stack));
    std::vector<const CandidateEntry*> cand_list;
    for (const auto& e : cands) {
        if (frame - e.init_frame + 1 < cfg_.tau) continue;  // window not filled yet
        Track* t = by_id.at(e.track_id);
        CropStack stack = collect_crop_stack(t->crop_cache, e.init_frame,
                                             e.init_frame + cfg_.tau - 1, BankKind::Candidate);
        cand_feats.push_back(tracklet_feat(stack));
        cand_list.push_back(&e);
    }
    if (cand_list.empty()) return;

    Tensor s_t = long_term_similarity(lost_feats, cand_feats);
    Matrix s(lost.size(), std::vector<double>(cand_list.size()));
    for (size_t r = 0; r < lost.size(); ++r)
        for (size_t u = 0; u < cand_list.size(); ++u) {
            // a candidate born before the track was lost cannot be the same target
            bool feasible = cand_list[u]->init_frame > lost[r].lost_frame;
            s[r][u] = feasible ? s_t.at({static_cast<int64_t>(r), static_cast<int64_t>(u)}) : 0.0;
        }

    Matching m = match_with_threshold(s, cfg_.theta_long);
    BankEvents events;
    for (auto [r, u] : m.pairs) {
        Track* lost_track = by_id.at(lost[r].track_id);
        Track* cand_track = by_id.at(cand_list[u]->track_id);

        // the candidate's segment is relabeled as the lost identity
        for (auto& fb : cand_track->boxes) lost_track->boxes.push_back(fb);
        lost_track->state = TrackState::Active;
        lost_track->last_observed = cand_track->last_observed;
        lost_track->score = cand_track->score;
        lost_track->motion = cand_track->motion;
        lost_track->crop_cache = cand_track->crop_cache;
        lost_track->short_feat = cand_track->short_feat;

        cand_track->boxes.clear();
        cand_track->crop_cache.clear();
        cand_track->state = TrackState::Removed;
        cand_track->absorbed_into = lost_track->id;

        events.associated.emplace_back(lost_track->id, cand_track->id);
        result.merges.push_back({lost_track->id, cand_track->id, frame});
        ++result.counts.step2_merges;
    }
    bank_update(banks_, events, -1);  // removal of the associated pairs
}

std::vector<Trajectory> Tracker::finalize() const {
    std::vector<Trajectory> out;
    for (const auto& t : tracks_) {
        if (t->absorbed_into >= 0) continue;
        if (static_cast<int64_t>(t->boxes.size()) < cfg_.min_track_length) continue;
        Trajectory tr;
        tr.id = t->id;
        tr.path = t->boxes;
        std::sort(tr.path.begin(), tr.path.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        tr.score = t->score;
        out.push_back(std::move(tr));
    }
    std::sort(out.begin(), out.end(),
              [](const Trajectory& a, const Trajectory& b) { return a.id < b.id; });
    return out;
}

}  // namespace mot
