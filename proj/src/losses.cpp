#include "mot/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mot {

Tensor l2_normalize_rows(const Tensor& x, double eps) {
    Tensor sq = sum(x * x, -1, true);
    return x / sqrt(sq + eps);
}

Tensor cosine_similarity_clamped(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[1])
        throw std::invalid_argument("cosine similarity: expected (M,D) and (N,D), got " +
                                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
    Tensor an = l2_normalize_rows(a);
    Tensor bn = l2_normalize_rows(b);
    return clamp(matmul(an, transpose(bn, 0, 1)), 0.0, 1.0);
}

Matrix label_matrix(const std::vector<int64_t>& ids_prev, const std::vector<int64_t>& ids_cur) {
    Matrix y(ids_prev.size(), std::vector<double>(ids_cur.size(), 0.0));
    for (size_t i = 0; i < ids_prev.size(); ++i)
        for (size_t j = 0; j < ids_cur.size(); ++j)
            if (ids_prev[i] == ids_cur[j]) y[i][j] = 1.0;
    return y;
}

Tensor inter_frame_loss(const Tensor& s, const Matrix& y, double temperature,
                        const Tensor& no_match_logit) {
    int64_t m = s.shape()[0], n = s.shape()[1];
    if (static_cast<int64_t>(y.size()) != m ||
        (m > 0 && static_cast<int64_t>(y[0].size()) != n))
        throw std::invalid_argument("inter_frame_loss: similarity " + shape_str(s.shape()) +
                                    " does not match label matrix " +
                                    std::to_string(y.size()) + "x" +
                                    std::to_string(y.empty() ? 0 : y[0].size()));
    if (m == 0) return Tensor::scalar(0.0);

    Tensor acc = Tensor::scalar(0.0);
    for (int64_t i = 0; i < m; ++i) {
        int64_t target = -1;
        for (int64_t j = 0; j < n; ++j)
            if (y[i][j] != 0.0) {
                target = j;
                break;
            }
        Tensor row = slice(s, 0, i, 1) * (1.0 / temperature);  // (1,n)
        if (target < 0) {
            Tensor nm = no_match_logit.defined() ? reshape(no_match_logit, {1, 1})
                                                 : Tensor::zeros({1, 1});
            row = concat({row, nm}, 1);  // "no match" class
            target = n;
        }
        Tensor lp = log_softmax(row, 1);
        acc = acc - reshape(slice(lp, 1, target, 1), {});
    }
    return acc * (1.0 / static_cast<double>(m));
}

// ---- memory bank ----

namespace {
std::vector<double> l2n(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    double inv = s > 0.0 ? 1.0 / std::sqrt(s) : 0.0;
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x *= inv;
    return out;
}
}  // namespace

bool MemoryBank::contains(int64_t id) const {
    return std::find(order_.begin(), order_.end(), id) != order_.end();
}

int64_t MemoryBank::index_of(int64_t id) const {
    auto it = std::find(order_.begin(), order_.end(), id);
    if (it == order_.end())
        throw std::invalid_argument("memory bank: unknown identity " + std::to_string(id));
    return it - order_.begin();
}

const std::vector<double>& MemoryBank::feature(int64_t id) const {
    return feats_[index_of(id)];
}

void MemoryBank::clear() {
    order_.clear();
    feats_.clear();
}

double MemoryBank::update(int64_t id, std::span<const double> feature) {
    auto it = std::find(order_.begin(), order_.end(), id);
    if (it == order_.end()) {
        order_.push_back(id);
        feats_.emplace_back(feature.begin(), feature.end());
        return 1.0;
    }
    size_t idx = it - order_.begin();
    std::vector<double> fn = l2n(feature);
    // softmax of normalized dots over all K entries, own entry selected
    double own = 0.0, denom = 0.0, mx = -1.0;
    std::vector<double> dots(feats_.size());
    for (size_t k = 0; k < feats_.size(); ++k) {
        dots[k] = dot(fn, l2n(feats_[k]));
        mx = std::max(mx, dots[k]);
    }
    for (size_t k = 0; k < feats_.size(); ++k) {
        double e = std::exp(dots[k] - mx);
        denom += e;
        if (k == idx) own = e;
    }
    double alpha = own / denom;
    auto& memo = feats_[idx];
    for (size_t i = 0; i < memo.size(); ++i)
        memo[i] = alpha * feature[i] + (1.0 - alpha) * memo[i];
    return alpha;
}

Tensor memory_loss(const MemoryBank& bank, const std::vector<Tensor>& feats,
                   const std::vector<int64_t>& ids, double temperature) {
    if (feats.size() != ids.size())
        throw std::invalid_argument("memory_loss: feature/id count mismatch");
    if (feats.empty()) return Tensor::scalar(0.0);
    int64_t k = bank.size();

    // memory entries are constants in the graph
    std::vector<double> memo;
    memo.reserve(k * feats[0].numel());
    for (int64_t e = 0; e < k; ++e) {
        auto fn = l2n(bank.feature(bank.ids()[e]));
        memo.insert(memo.end(), fn.begin(), fn.end());
    }
    Tensor memo_t = Tensor::from_data({k, feats[0].numel()}, std::move(memo));

    Tensor acc = Tensor::scalar(0.0);
    for (size_t i = 0; i < feats.size(); ++i) {
        int64_t target = bank.index_of(ids[i]);
        Tensor fn = l2_normalize_rows(reshape(feats[i], {1, feats[i].numel()}));
        Tensor logits = matmul(fn, transpose(memo_t, 0, 1)) * (1.0 / temperature);  // (1,K)
        Tensor lp = log_softmax(logits, 1);
        acc = acc - reshape(slice(lp, 1, target, 1), {});
    }
    return acc;
}

namespace {
Tensor cosine_pair(const Tensor& a, const Tensor& b) {
    Tensor num = sum(a * b);
    Tensor den = sqrt(sum(a * a) + 1e-24) * sqrt(sum(b * b) + 1e-24);
    return num / den;
}
}  // namespace

Tensor inner_frame_triplet_loss(const std::vector<Tensor>& feats_cur,
                                const std::vector<Tensor>& feats_prev,
                                const std::vector<int64_t>& ids_cur,
                                const std::vector<int64_t>& ids_prev, double margin) {
    Tensor acc = Tensor::scalar(0.0);
    int64_t valid = 0;
    for (size_t i = 0; i < feats_cur.size(); ++i) {
        // positive: same identity in the adjacent frame
        int64_t pos = -1;
        for (size_t j = 0; j < ids_prev.size(); ++j)
            if (ids_prev[j] == ids_cur[i]) {
                pos = static_cast<int64_t>(j);
                break;
            }
        if (pos < 0) continue;
        // hard negative: most similar different identity within frame t
        int64_t neg = -1;
        double best = -2.0;
        for (size_t j = 0; j < feats_cur.size(); ++j) {
            if (ids_cur[j] == ids_cur[i]) continue;
            double c;
            {
                NoGradGuard ng;
                c = cosine_pair(feats_cur[i], feats_cur[j]).item();
            }
            if (c > best) {
                best = c;
                neg = static_cast<int64_t>(j);
            }
        }
        if (neg < 0) continue;
        Tensor cos_pos = cosine_pair(feats_cur[i], feats_prev[pos]);
        Tensor cos_neg = cosine_pair(feats_cur[i], feats_cur[neg]);
        // hinge on cosine distances d = 1 - cos
        acc = acc + relu(cos_neg - cos_pos + margin);
        ++valid;
    }
    if (valid == 0) return Tensor::scalar(0.0);
    return acc * (1.0 / static_cast<double>(valid));
}

Tensor total_loss(const Tensor& inter, const Tensor& memo, const Tensor& inner,
                  double lambda1, double lambda2) {
    return inter + memo * lambda1 + inner * lambda2;
}

Tensor asso_loss(const Tensor& sims, const std::vector<double>& labels, double eps) {
    if (sims.numel() == 0) throw std::invalid_argument("asso_loss: empty sample list");
    if (sims.numel() != static_cast<int64_t>(labels.size()))
        throw std::invalid_argument("asso_loss: similarity/label count mismatch");
    Tensor y = Tensor::from_data(sims.shape(), std::vector<double>(labels));
    Tensor p = clamp(sims, eps, 1.0 - eps);
    Tensor loss = neg(y * log(p) + (1.0 - y) * log(1.0 - p));
    return mean(loss);
}

}  // namespace mot
