#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mot/nn.hpp"
#include "mot/tensor.hpp"

namespace mot {

enum class BankKind { Lost, Candidate };

/// RoI crops of one tracklet over its time window, (tau, C, 4, 4).
struct CropStack {
    Tensor crops;
    std::vector<int64_t> frames;  // source frame per entry
    BankKind kind = BankKind::Lost;
};

/// Per-frame crop history as cached on a track: (frame, (C,4,4) crop).
using CropHistory = std::vector<std::pair<int64_t, Tensor>>;

/// Picks the crop for each frame of [first_frame, last_frame]; frames missing
/// from the history are filled with the nearest available crop inside the
/// window (earlier frame wins ties). Throws when the window is empty of
/// crops.
CropStack collect_crop_stack(const CropHistory& history, int64_t first_frame,
                             int64_t last_frame, BankKind kind);

struct BankConfig {
    int64_t max_lost_age = 100;      // frames a lost tracklet stays recoverable
    int64_t candidate_max_age = 20;  // frames a new tracklet stays mergeable
    int64_t tau = 4;
};

struct LostEntry {
    int track_id = 0;
    int64_t lost_frame = 0;  // last observed frame
    CropStack stack;
};

struct CandidateEntry {
    int track_id = 0;
    int64_t init_frame = 0;
};

/// Lifecycle changes applied by one bank update.
struct BankEvents {
    std::vector<LostEntry> new_lost;
    std::vector<CandidateEntry> new_candidates;
    std::vector<std::pair<int, int>> associated;  // (lost id, candidate id)
};

/// The lost and candidate tracklet banks. A track id can sit in at most one
/// bank; double admission is an error.
class TrackletBanks {
public:
    explicit TrackletBanks(BankConfig cfg) : cfg_(cfg) {}

    void add_lost(LostEntry entry);
    void add_candidate(CandidateEntry entry);
    void remove_track(int track_id);  // no-op when absent
    bool contains(int track_id) const;

    /// Drops entries older than the configured horizons at `frame`; returns
    /// the evicted ids (lost entries first, each group in admission order).
    std::vector<int> evict_aged(int64_t frame);

    const std::vector<LostEntry>& lost() const { return lost_; }
    const std::vector<CandidateEntry>& candidates() const { return candidates_; }
    const BankConfig& config() const { return cfg_; }

private:
    BankConfig cfg_;
    std::vector<LostEntry> lost_;
    std::vector<CandidateEntry> candidates_;
};

/// Admissions, association removals, then age-based eviction, in that order.
void bank_update(TrackletBanks& banks, const BankEvents& events, int64_t frame);

struct MsflConfig {
    int64_t dim = 128;  // token width = crop channel count
    int64_t heads = 4;
    int64_t blocks = 3;
    int64_t tau = 4;
};

/// Multi-shot feature learning: spatiotemporal attention over the tau*16 crop
/// tokens of a tracklet, mean-pooled per frame and combined by a learned
/// temporal weight vector per bank.
class MsflModel {
public:
    MsflModel(MsflConfig cfg, uint64_t seed);

    /// stack.crops must be (tau, dim, 4, 4); returns a (dim,) feature.
    Tensor tracklet_feature(const CropStack& stack) const;

    const MsflConfig& config() const { return cfg_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }

private:
    MsflConfig cfg_;
    ParameterStore store_;
    std::vector<AttentionBlockParams> blocks_;
    Tensor frame_embed_;  // (tau, dim), zero-initialized
    Tensor pos_embed_;    // (16, dim), zero-initialized
    Tensor w_lost_, w_cadi_;  // (tau,), start at 1/tau
};

/// Parameter-free tracklet descriptor: crops mean-pooled over space and time.
/// Stands in for the learned feature when running with oracle embeddings.
Tensor oracle_tracklet_feature(const CropStack& stack);

/// Cosine similarity of tracklet features clamped to [0,1]; empty inputs give
/// an empty matrix.
Tensor long_term_similarity(const std::vector<Tensor>& lost_feats,
                            const std::vector<Tensor>& cand_feats);

}  // namespace mot
