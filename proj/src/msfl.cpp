#include "mot/msfl.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mot/geometry.hpp"
#include "mot/losses.hpp"

namespace mot {

CropStack collect_crop_stack(const CropHistory& history, int64_t first_frame,
                             int64_t last_frame, BankKind kind) {
    if (last_frame < first_frame)
        throw std::invalid_argument("collect_crop_stack: empty window");
    // crops available inside the window, by frame
    std::vector<const std::pair<int64_t, Tensor>*> in_window;
    for (const auto& entry : history)
        if (entry.first >= first_frame && entry.first <= last_frame)
            in_window.push_back(&entry);
    if (in_window.empty())
        throw std::invalid_argument("collect_crop_stack: no crops in window [" +
                                    std::to_string(first_frame) + "," +
                                    std::to_string(last_frame) + "]");
    std::sort(in_window.begin(), in_window.end(),
              [](auto* a, auto* b) { return a->first < b->first; });

    CropStack stack;
    stack.kind = kind;
    std::vector<Tensor> rows;
    for (int64_t f = first_frame; f <= last_frame; ++f) {
        const std::pair<int64_t, Tensor>* best = in_window[0];
        for (auto* e : in_window) {
            int64_t d = std::llabs(e->first - f);
            int64_t bd = std::llabs(best->first - f);
            if (d < bd) best = e;  // ties keep the earlier frame
        }
        stack.frames.push_back(best->first);
        const auto& sh = best->second.shape();
        rows.push_back(reshape(best->second, {1, sh[0], sh[1], sh[2]}));
    }
    stack.crops = rows.size() == 1 ? rows[0] : concat(rows, 0);
    return stack;
}

// ---- banks ----

void TrackletBanks::add_lost(LostEntry entry) {
    if (contains(entry.track_id))
        throw std::invalid_argument("tracklet bank: track " + std::to_string(entry.track_id) +
                                    " already admitted");
    lost_.push_back(std::move(entry));
}

void TrackletBanks::add_candidate(CandidateEntry entry) {
    if (contains(entry.track_id))
        throw std::invalid_argument("tracklet bank: track " + std::to_string(entry.track_id) +
                                    " already admitted");
    candidates_.push_back(entry);
}

void TrackletBanks::remove_track(int track_id) {
    lost_.erase(std::remove_if(lost_.begin(), lost_.end(),
                               [&](const LostEntry& e) { return e.track_id == track_id; }),
                lost_.end());
    candidates_.erase(
        std::remove_if(candidates_.begin(), candidates_.end(),
                       [&](const CandidateEntry& e) { return e.track_id == track_id; }),
        candidates_.end());
}

bool TrackletBanks::contains(int track_id) const {
    for (const auto& e : lost_)
        if (e.track_id == track_id) return true;
    for (const auto& e : candidates_)
        if (e.track_id == track_id) return true;
    return false;
}

std::vector<int> TrackletBanks::evict_aged(int64_t frame) {
    std::vector<int> evicted;
    auto lost_end = std::remove_if(lost_.begin(), lost_.end(), [&](const LostEntry& e) {
        bool out = frame - e.lost_frame > cfg_.max_lost_age;
        if (out) evicted.push_back(e.track_id);
        return out;
    });
    lost_.erase(lost_end, lost_.end());
    auto cand_end =
        std::remove_if(candidates_.begin(), candidates_.end(), [&](const CandidateEntry& e) {
            bool out = frame - e.init_frame > cfg_.candidate_max_age;
            if (out) evicted.push_back(e.track_id);
            return out;
        });
    candidates_.erase(cand_end, candidates_.end());
    return evicted;
}

void bank_update(TrackletBanks& banks, const BankEvents& events, int64_t frame) {
    for (const auto& e : events.new_lost) banks.add_lost(e);
    for (const auto& e : events.new_candidates) banks.add_candidate(e);
    for (auto [lost_id, cand_id] : events.associated) {
        banks.remove_track(lost_id);
        banks.remove_track(cand_id);
    }
    banks.evict_aged(frame);
}

// ---- model ----

MsflModel::MsflModel(MsflConfig cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    for (int64_t i = 0; i < cfg_.blocks; ++i)
        blocks_.push_back(make_attention_block(store_, "msfl.block" + std::to_string(i),
                                               cfg_.dim, cfg_.heads, rng));
    frame_embed_ = store_.add("msfl.frame_embed", Tensor::zeros({cfg_.tau, cfg_.dim}));
    pos_embed_ = store_.add("msfl.pos_embed",
                            Tensor::zeros({kRoiBins * kRoiBins, cfg_.dim}));
    double w0 = 1.0 / static_cast<double>(cfg_.tau);
    w_lost_ = store_.add("msfl.w_lost", Tensor::full({cfg_.tau}, w0));
    w_cadi_ = store_.add("msfl.w_cadi", Tensor::full({cfg_.tau}, w0));
}

Tensor MsflModel::tracklet_feature(const CropStack& stack) const {
    const auto& sh = stack.crops.shape();
    if (sh.size() != 4 || sh[0] != cfg_.tau || sh[1] != cfg_.dim || sh[2] != kRoiBins ||
        sh[3] != kRoiBins)
        throw std::invalid_argument("tracklet_feature: expected stack (" +
                                    std::to_string(cfg_.tau) + "," + std::to_string(cfg_.dim) +
                                    ",4,4), got " + shape_str(stack.crops.shape()));
    int64_t bins = kRoiBins * kRoiBins;

    std::vector<Tensor> frames;
    for (int64_t f = 0; f < cfg_.tau; ++f) {
        Tensor crop = reshape(slice(stack.crops, 0, f, 1), {cfg_.dim, bins});
        Tensor tok = transpose(crop, 0, 1);  // (16, dim)
        tok = tok + pos_embed_ + slice(frame_embed_, 0, f, 1);
        frames.push_back(tok);
    }
    Tensor tokens = concat(frames, 0);  // (tau*16, dim)
    for (const auto& blk : blocks_) tokens = attention_block(tokens, blk);

    Tensor per_frame = mean(reshape(tokens, {cfg_.tau, bins, cfg_.dim}), 1, false);  // (tau,dim)
    const Tensor& w = stack.kind == BankKind::Lost ? w_lost_ : w_cadi_;
    return reshape(matmul(reshape(w, {1, cfg_.tau}), per_frame), {cfg_.dim});
}

Tensor oracle_tracklet_feature(const CropStack& stack) {
    const auto& sh = stack.crops.shape();
    Tensor per_frame = mean(reshape(stack.crops, {sh[0], sh[1], sh[2] * sh[3]}), 2, false);
    return mean(per_frame, 0, false);  // (C,)
}

Tensor long_term_similarity(const std::vector<Tensor>& lost_feats,
                            const std::vector<Tensor>& cand_feats) {
    int64_t r = static_cast<int64_t>(lost_feats.size());
    int64_t u = static_cast<int64_t>(cand_feats.size());
    if (r == 0 || u == 0) return Tensor::zeros({r, u});
    auto stack_rows = [](const std::vector<Tensor>& v) {
        std::vector<Tensor> rows;
        for (const auto& t : v) rows.push_back(reshape(t, {1, t.numel()}));
        return rows.size() == 1 ? rows[0] : concat(rows, 0);
    };
    return cosine_similarity_clamped(stack_rows(lost_feats), stack_rows(cand_feats));
}

}  // namespace mot
