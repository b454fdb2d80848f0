#pragma once

#include <cstdint>
#include <vector>

#include "mot/assoc.hpp"
#include "mot/tensor.hpp"

namespace mot {

/// Rows of `a` and `b` L2-normalized, with a tiny epsilon so zero rows map to
/// zero instead of NaN.
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-24);

/// Pairwise cosine similarity of row vectors, clamped to [0,1]: negative
/// cosines score 0 and zero-norm vectors score 0 everywhere.
Tensor cosine_similarity_clamped(const Tensor& a, const Tensor& b);

/// y[i][j] = 1 iff ids_prev[i] == ids_cur[j].
Matrix label_matrix(const std::vector<int64_t>& ids_prev, const std::vector<int64_t>& ids_cur);

/// Row-wise cross-entropy of a similarity matrix against a binary target.
/// Each row's similarities become logits at `temperature`; rows with no
/// positive get an extra "no match" logit as their target class — a learned
/// scalar when supplied, constant zero otherwise. Mean over rows.
Tensor inter_frame_loss(const Tensor& s, const Matrix& y, double temperature = 0.1,
                        const Tensor& no_match_logit = Tensor());

/// Per-identity EMA feature store used by the memory loss.
class MemoryBank {
public:
    bool contains(int64_t id) const;
    int64_t size() const { return static_cast<int64_t>(order_.size()); }

    /// Inserts verbatim for a new identity (ratio 1); otherwise blends with a
    /// ratio given by a softmax of the feature's normalized dot products
    /// against every stored entry. Returns the ratio used.
    double update(int64_t id, std::span<const double> feature);

    const std::vector<double>& feature(int64_t id) const;
    const std::vector<int64_t>& ids() const { return order_; }
    int64_t index_of(int64_t id) const;
    void clear();

private:
    std::vector<int64_t> order_;
    std::vector<std::vector<double>> feats_;
};

/// Cross-entropy of each feature's similarity to every memory entry against
/// its own identity's slot. Similarities are normalized dots at
/// `temperature`. Sum over the given targets; every id must be in the bank.
Tensor memory_loss(const MemoryBank& bank, const std::vector<Tensor>& feats,
                   const std::vector<int64_t>& ids, double temperature = 0.1);

/// Hard-negative triplet loss on cosine distance within frame t. Anchors are
/// targets of frame t whose identity also appears in the previous frame; the
/// negative is the most similar different-identity feature of frame t.
Tensor inner_frame_triplet_loss(const std::vector<Tensor>& feats_cur,
                                const std::vector<Tensor>& feats_prev,
                                const std::vector<int64_t>& ids_cur,
                                const std::vector<int64_t>& ids_prev, double margin = 0.3);

/// inter + lambda1 * memo + lambda2 * inner.
Tensor total_loss(const Tensor& inter, const Tensor& memo, const Tensor& inner,
                  double lambda1, double lambda2);

/// Mean binary cross-entropy over tracklet-pair similarities in [0,1];
/// probabilities are clipped to [eps, 1-eps] before the logs. n must be >= 1.
Tensor asso_loss(const Tensor& sims, const std::vector<double>& labels, double eps = 1e-7);

}  // namespace mot
