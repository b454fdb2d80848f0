#include "mot/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "mot/rng.hpp"

namespace mot {

namespace {

struct FrameSample {
    std::vector<Box> boxes;
    std::vector<int64_t> ids;
};

FrameSample visible_targets(const GroundTruth& gt, int64_t frame) {
    FrameSample s;
    for (size_t i = 0; i < gt.targets.size(); ++i)
        if (gt.targets[i].visible[frame]) {
            s.boxes.push_back(gt.targets[i].boxes[frame]);
            s.ids.push_back(gt.identity(static_cast<int64_t>(i)));
        }
    return s;
}

int64_t common_ids(const FrameSample& a, const FrameSample& b) {
    int64_t n = 0;
    for (int64_t id : a.ids)
        if (std::find(b.ids.begin(), b.ids.end(), id) != b.ids.end()) ++n;
    return n;
}

std::vector<Tensor> rows_of(const Tensor& batch) {
    std::vector<Tensor> rows;
    for (int64_t i = 0; i < batch.shape()[0]; ++i) rows.push_back(slice(batch, 0, i, 1));
    return rows;
}

class PyramidCache {
public:
    explicit PyramidCache(const GroundTruth& gt) : gt_(gt) {}
    const FeaturePyramid& get(int64_t frame) {
        auto it = cache_.find(frame);
        if (it == cache_.end())
            it = cache_.emplace(frame, render_pyramid(gt_, frame)).first;
        return it->second;
    }

private:
    const GroundTruth& gt_;
    std::map<int64_t, FeaturePyramid> cache_;
};

// ID-aware map of frame f, following the runtime convention that frame 0
// pairs with itself.
IdAwareMap map_at(SsflModel& model, PyramidCache& pyr, int64_t f) {
    const FeaturePyramid& prev = pyr.get(f == 0 ? 0 : f - 1);
    return model.forward(prev, pyr.get(f));
}

struct SsflEval {
    double inter = 0;
    double accuracy = 0;
};

SsflEval eval_ssfl(const GroundTruth& gt, SsflModel& model, PyramidCache& pyr,
                   const std::vector<int64_t>& eval_frames, double temperature) {
    NoGradGuard ng;
    double loss_sum = 0.0;
    int64_t loss_n = 0, correct = 0, total = 0;
    for (int64_t t : eval_frames) {
        FrameSample prev = visible_targets(gt, t - 1);
        FrameSample cur = visible_targets(gt, t);
        if (prev.ids.empty() || cur.ids.empty()) continue;
        IdAwareMap map_prev = map_at(model, pyr, t - 1);
        IdAwareMap map_cur = map_at(model, pyr, t);
        Tensor f_prev = model.extract_short_term(map_prev, prev.boxes, Mode::Infer);
        Tensor f_cur = model.extract_short_term(map_cur, cur.boxes, Mode::Infer);
        Tensor s = short_term_similarity(f_prev, f_cur);
        loss_sum += inter_frame_loss(s, label_matrix(prev.ids, cur.ids), temperature,
                                     model.no_match_logit())
                        .item();
        ++loss_n;
        for (size_t r = 0; r < prev.ids.size(); ++r) {
            if (std::find(cur.ids.begin(), cur.ids.end(), prev.ids[r]) == cur.ids.end())
                continue;
            std::vector<double> row(cur.ids.size());
            for (size_t c = 0; c < cur.ids.size(); ++c)
                row[c] = s.at({static_cast<int64_t>(r), static_cast<int64_t>(c)});
            if (cur.ids[argmax(row)] == prev.ids[r]) ++correct;
            ++total;
        }
    }
    SsflEval e;
    e.inter = loss_n > 0 ? loss_sum / static_cast<double>(loss_n) : 0.0;
    e.accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    return e;
}

}  // namespace

SsflTrainResult train_ssfl(const GroundTruth& gt, SsflModel& model, const TrainConfig& cfg,
                           const std::string& loss_csv_path) {
    if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0)
        throw std::invalid_argument("train_ssfl: loss weights must be nonnegative");
    const int64_t frames = gt.cfg.frames;
    if (frames < 8) throw std::invalid_argument("train_ssfl: scenario too short");
    int64_t train_end = std::max<int64_t>(
        4, static_cast<int64_t>(std::llround((1.0 - cfg.holdout_fraction) * frames)));
    train_end = std::min(train_end, frames);

    PyramidCache pyr(gt);
    Rng rng(Rng::mix(cfg.seed, 0x55f1));
    Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    MemoryBank bank;

    std::vector<int64_t> eval_frames;
    for (int64_t t = std::max<int64_t>(train_end, 2); t < frames && eval_frames.size() < 8; ++t)
        eval_frames.push_back(t);

    SsflTrainResult result;
    result.initial_eval_inter =
        eval_ssfl(gt, model, pyr, eval_frames, cfg.inter_temperature).inter;

    std::ofstream csv;
    if (!loss_csv_path.empty()) {
        csv.open(loss_csv_path, std::ios::trunc);
        csv << "iter,inter,memo,inner,total\n";
    }

    int64_t decay_iter = static_cast<int64_t>(cfg.lr_decay_at * cfg.iterations);
    int64_t trace_every = std::max<int64_t>(1, cfg.iterations / 10);
    for (int64_t iter = 0; iter < cfg.iterations; ++iter) {
        if (iter == decay_iter && cfg.lr_decay != 1.0) adam.set_lr(cfg.lr * cfg.lr_decay);
        if (iter % trace_every == 0)
            result.eval_trace.emplace_back(
                iter, eval_ssfl(gt, model, pyr, eval_frames, cfg.inter_temperature).inter);
        // sample a frame pair with at least one shared identity
        int64_t t = -1;
        FrameSample prev, cur;
        for (int attempt = 0; attempt < 64; ++attempt) {
            int64_t cand = rng.uniform_int(2, train_end - 1);
            FrameSample p = visible_targets(gt, cand - 1);
            FrameSample c = visible_targets(gt, cand);
            if (!p.ids.empty() && !c.ids.empty() && common_ids(p, c) > 0) {
                t = cand;
                prev = std::move(p);
                cur = std::move(c);
                break;
            }
        }
        if (t < 0) throw std::runtime_error("train_ssfl: no usable frame pair found");

        IdAwareMap map_prev = map_at(model, pyr, t - 1);
        IdAwareMap map_cur = map_at(model, pyr, t);
        Tensor f_prev = model.extract_short_term(map_prev, prev.boxes, Mode::Train);
        Tensor f_cur = model.extract_short_term(map_cur, cur.boxes, Mode::Train);
        auto rows_prev = rows_of(f_prev);
        auto rows_cur = rows_of(f_cur);

        Tensor s = short_term_similarity(f_prev, f_cur);
        Tensor l_inter = inter_frame_loss(s, label_matrix(prev.ids, cur.ids),
                                          cfg.inter_temperature, model.no_match_logit());

        // fresh identities enter the memory verbatim before the loss
        for (size_t i = 0; i < cur.ids.size(); ++i)
            if (!bank.contains(cur.ids[i])) {
                NoGradGuard ng;
                bank.update(cur.ids[i], rows_cur[i].data());
            }
        Tensor l_memo = memory_loss(bank, rows_cur, cur.ids, cfg.memo_temperature);
        Tensor l_inner = inner_frame_triplet_loss(rows_cur, rows_prev, cur.ids, prev.ids,
                                                  cfg.triplet_margin);
        Tensor l_total = total_loss(l_inter, l_memo, l_inner, cfg.lambda1, cfg.lambda2);

        if (!std::isfinite(l_total.item()))
            throw std::runtime_error("train_ssfl: loss diverged at iteration " +
                                     std::to_string(iter));

        model.params().zero_grad();
        l_total.backward();
        adam.step(model.params());

        // EMA memory advance with the post-loss features
        for (size_t i = 0; i < cur.ids.size(); ++i) bank.update(cur.ids[i], rows_cur[i].data());

        SsflIterLog lg{iter, l_inter.item(), l_memo.item(), l_inner.item(), l_total.item()};
        result.log.push_back(lg);
        if (csv.is_open())
            csv << lg.iter << ',' << lg.inter << ',' << lg.memo << ',' << lg.inner << ','
                << lg.total << '\n';
    }

    SsflEval fin = eval_ssfl(gt, model, pyr, eval_frames, cfg.inter_temperature);
    result.final_eval_inter = fin.inter;
    result.holdout_argmax_accuracy = fin.accuracy;
    return result;
}

// ---- MSFL ----

namespace {

struct TrackletWindow {
    int64_t target = 0;   // target index
    int64_t first = 0, last = 0;  // inclusive frame window
    BankKind kind = BankKind::Lost;
};

bool window_ok(const GroundTruth& gt, int64_t target, int64_t first, int64_t last) {
    if (first < 0 || last >= gt.cfg.frames) return false;
    for (int64_t f = first; f <= last; ++f)
        if (!gt.targets[target].visible[f]) return false;
    return true;
}

}  // namespace

MsflTrainResult train_msfl(const GroundTruth& gt, MsflModel& model, const TrainConfig& cfg,
                           SsflModel* ssfl, const std::string& loss_csv_path) {
    const int64_t tau = model.config().tau;

    // front/rear tracklets around every occlusion event
    std::vector<TrackletWindow> fronts, rears;
    for (const auto& ev : gt.events) {
        TrackletWindow front{ev.target, ev.start - tau, ev.start - 1, BankKind::Lost};
        TrackletWindow rear{ev.target, ev.end + 1, ev.end + tau, BankKind::Candidate};
        if (window_ok(gt, ev.target, front.first, front.last)) fronts.push_back(front);
        if (window_ok(gt, ev.target, rear.first, rear.last)) rears.push_back(rear);
    }
    if (fronts.empty() || rears.empty())
        throw std::invalid_argument("train_msfl: scenario has no usable occlusion tracklets");

    // crops come from fixed maps; cache one map per needed frame
    PyramidCache pyr(gt);
    std::map<int64_t, Tensor> maps;
    auto map_for = [&](int64_t f) -> const Tensor& {
        auto it = maps.find(f);
        if (it == maps.end()) {
            NoGradGuard ng;
            Tensor m = ssfl ? map_at(*ssfl, pyr, f).map.detach()
                            : render_oracle_map(gt, f).map;
            it = maps.emplace(f, std::move(m)).first;
        }
        return it->second;
    };
    auto build_stack = [&](const TrackletWindow& win) {
        CropHistory hist;
        for (int64_t f = win.first; f <= win.last; ++f)
            hist.emplace_back(f, roi_align(map_for(f), gt.targets[win.target].boxes[f], 8.0));
        return collect_crop_stack(hist, win.first, win.last, win.kind);
    };
    std::vector<CropStack> front_stacks, rear_stacks;
    {
        NoGradGuard ng;
        for (const auto& s : fronts) front_stacks.push_back(build_stack(s));
        for (const auto& s : rears) rear_stacks.push_back(build_stack(s));
    }

    // every (front, rear) combination, positive iff same trajectory
    struct Pair {
        size_t front, rear;
        double label;
    };
    std::vector<Pair> pool;
    for (size_t i = 0; i < fronts.size(); ++i)
        for (size_t j = 0; j < rears.size(); ++j)
            pool.push_back({i, j, fronts[i].target == rears[j].target ? 1.0 : 0.0});

    Rng rng(Rng::mix(cfg.seed, 0x3f51));
    std::vector<size_t> order(pool.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int64_t>(i) - 1)]);
    size_t holdout_n = std::max<size_t>(1, static_cast<size_t>(
                                               cfg.holdout_fraction * pool.size()));
    std::vector<size_t> holdout(order.begin(), order.begin() + holdout_n);
    std::vector<size_t> train(order.begin() + holdout_n, order.end());

    std::vector<size_t> train_pos, train_neg;
    for (size_t idx : train)
        (pool[idx].label > 0.5 ? train_pos : train_neg).push_back(idx);
    if (train_pos.empty() || train_neg.empty())
        throw std::invalid_argument("train_msfl: training split lacks a class; "
                                    "add occlusion events or targets");

    auto pair_similarity = [&](const Pair& p) {
        Tensor g_front = model.tracklet_feature(front_stacks[p.front]);
        Tensor g_rear = model.tracklet_feature(rear_stacks[p.rear]);
        Tensor s = cosine_similarity_clamped(reshape(g_front, {1, g_front.numel()}),
                                             reshape(g_rear, {1, g_rear.numel()}));
        return reshape(s, {1});
    };

    Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    MsflTrainResult result;
    result.train_pairs = static_cast<int64_t>(train.size());
    result.holdout_pairs = static_cast<int64_t>(holdout.size());

    std::ofstream csv;
    if (!loss_csv_path.empty()) {
        csv.open(loss_csv_path, std::ios::trunc);
        csv << "iter,asso\n";
    }

    for (int64_t iter = 0; iter < cfg.iterations; ++iter) {
        // 1 positive : 3 negatives per step
        std::vector<size_t> batch;
        batch.push_back(train_pos[rng.uniform_int(0, static_cast<int64_t>(train_pos.size()) - 1)]);
        for (int k = 0; k < 3; ++k)
            batch.push_back(
                train_neg[rng.uniform_int(0, static_cast<int64_t>(train_neg.size()) - 1)]);

        std::vector<Tensor> sims;
        std::vector<double> labels;
        for (size_t idx : batch) {
            sims.push_back(pair_similarity(pool[idx]));
            labels.push_back(pool[idx].label);
        }
        Tensor loss = asso_loss(concat(sims, 0), labels);
        if (!std::isfinite(loss.item()))
            throw std::runtime_error("train_msfl: loss diverged at iteration " +
                                     std::to_string(iter));
        model.params().zero_grad();
        loss.backward();
        adam.step(model.params());

        result.log.push_back({iter, loss.item()});
        if (csv.is_open()) csv << iter << ',' << loss.item() << '\n';
    }

    {
        NoGradGuard ng;
        int64_t correct = 0;
        for (size_t idx : holdout) {
            double s = pair_similarity(pool[idx]).item();
            bool predicted = s >= 0.5;
            if (predicted == (pool[idx].label > 0.5)) ++correct;
        }
        result.holdout_accuracy =
            holdout.empty() ? 0.0
                            : static_cast<double>(correct) / static_cast<double>(holdout.size());
    }
    return result;
}

}  // namespace mot
