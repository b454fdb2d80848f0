#include "mot/ssfl.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mot/losses.hpp"

namespace mot {

int64_t SsflConfig::level_h(int k) const {
    int64_t h = h1;
    for (int i = 0; i < k; ++i) h = (h + 1) / 2;
    return h;
}

int64_t SsflConfig::level_w(int k) const {
    int64_t w = w1;
    for (int i = 0; i < k; ++i) w = (w + 1) / 2;
    return w;
}

void validate_pyramid(const FeaturePyramid& p) {
    for (int k = 0; k < kPyramidLevels; ++k) {
        if (!p.levels[k].defined() || p.levels[k].ndim() != 3)
            throw std::invalid_argument("pyramid level " + std::to_string(k + 1) +
                                        " must be a (C,H,W) tensor");
        if (k > 0) {
            int64_t ph = p.levels[k - 1].shape()[1], pw = p.levels[k - 1].shape()[2];
            if (p.levels[k].shape()[1] != (ph + 1) / 2 || p.levels[k].shape()[2] != (pw + 1) / 2)
                throw std::invalid_argument("pyramid level sizes must halve (ceil): level " +
                                            std::to_string(k) + " is " +
                                            shape_str(p.levels[k].shape()));
        }
    }
}

SsflModel::SsflModel(SsflConfig cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    frame_embed_ = store_.add("ssfl.frame_embed", Tensor::zeros({2, cfg_.model_dim}));
    for (int k = 0; k < kPyramidLevels; ++k) {
        auto& lp = levels_[k];
        std::string p = "ssfl.level" + std::to_string(k + 1);
        lp.proj_w = store_.add(p + ".proj.w", xavier_uniform(rng, cfg_.model_dim,
                                                             cfg_.pyramid_channels[k]));
        lp.proj_b = store_.add(p + ".proj.b", Tensor::zeros({cfg_.model_dim}));
        if (!cfg_.shared_encoder || k == 0) {
            std::string ep = cfg_.shared_encoder ? "ssfl.encoder" : p + ".encoder";
            for (int64_t d = 0; d < cfg_.encoder_depth; ++d)
                lp.encoder.push_back(make_encoder_layer(store_, ep + ".l" + std::to_string(d),
                                                        cfg_.model_dim, cfg_.heads,
                                                        cfg_.ffn_dim, rng));
        } else {
            lp.encoder = levels_[0].encoder;
        }
        lp.fuse1_w = store_.add(p + ".fuse1.w",
                                xavier_uniform(rng, cfg_.fused_hidden, cfg_.model_dim));
        lp.fuse1_b = store_.add(p + ".fuse1.b", Tensor::zeros({cfg_.fused_hidden}));
        lp.fuse2_w = store_.add(p + ".fuse2.w",
                                xavier_uniform(rng, cfg_.fused_hidden, cfg_.fused_hidden));
        lp.fuse2_b = store_.add(p + ".fuse2.b", Tensor::zeros({cfg_.fused_hidden}));
        lp.pos = cfg_.positional_encoding
                     ? sinusoidal_encoding_2d(cfg_.level_h(k), cfg_.level_w(k), cfg_.model_dim)
                     : Tensor::zeros({cfg_.level_h(k) * cfg_.level_w(k), cfg_.model_dim});
    }
    final_w_ = store_.add("ssfl.final.w",
                          xavier_uniform(rng, cfg_.map_channels,
                                         cfg_.fused_hidden * kPyramidLevels));
    final_b_ = store_.add("ssfl.final.b", Tensor::zeros({cfg_.map_channels}));
    bn_ = make_batch_norm(store_, "ssfl.bn", cfg_.short_feature_dim());
    no_match_logit_ = store_.add("ssfl.no_match_logit", Tensor::full({}, 4.0));
}

namespace {

// (C,H,W) -> (H*W, C) token rows
Tensor flatten_tokens(const Tensor& map) {
    int64_t c = map.shape()[0], h = map.shape()[1], w = map.shape()[2];
    return transpose(reshape(map, {c, h * w}), 0, 1);
}

}  // namespace

TokenSequence SsflModel::build_tokens(const FeaturePyramid& prev, const FeaturePyramid& cur,
                                      int level) const {
    const auto& lp = levels_[level];
    const Tensor& fp = prev.levels[level];
    const Tensor& fc = cur.levels[level];
    if (fp.shape() != fc.shape())
        throw std::invalid_argument("build_tokens: frame shapes differ at level " +
                                    std::to_string(level + 1) + ": " + shape_str(fp.shape()) +
                                    " vs " + shape_str(fc.shape()));
    if (fp.shape()[0] != cfg_.pyramid_channels[level])
        throw std::invalid_argument("build_tokens: expected " +
                                    std::to_string(cfg_.pyramid_channels[level]) +
                                    " channels at level " + std::to_string(level + 1) +
                                    ", got " + shape_str(fp.shape()));

    Tensor tok_prev = flatten_tokens(conv1x1(fp, lp.proj_w, lp.proj_b));
    Tensor tok_cur = flatten_tokens(conv1x1(fc, lp.proj_w, lp.proj_b));
    Tensor emb_prev = slice(frame_embed_, 0, 0, 1);
    Tensor emb_cur = slice(frame_embed_, 0, 1, 1);
    tok_prev = tok_prev + lp.pos + emb_prev;
    tok_cur = tok_cur + lp.pos + emb_cur;

    TokenSequence seq;
    seq.tokens = concat({tok_prev, tok_cur}, 0);
    seq.level = level;
    seq.split_point = tok_prev.shape()[0];
    return seq;
}

std::array<Tensor, kPyramidLevels> SsflModel::interaction_enhance(
    const FeaturePyramid& prev, const FeaturePyramid& cur) const {
    validate_pyramid(prev);
    validate_pyramid(cur);
    std::array<Tensor, kPyramidLevels> out;
    for (int k = 0; k < kPyramidLevels; ++k) {
        TokenSequence seq = build_tokens(prev, cur, k);
        Tensor tok = seq.tokens;
        for (const auto& layer : levels_[k].encoder) tok = encoder_layer(tok, layer);
        Tensor half = slice(tok, 0, seq.split_point, seq.split_point);  // frame t rows
        int64_t h = cur.levels[k].shape()[1], w = cur.levels[k].shape()[2];
        out[k] = reshape(transpose(half, 0, 1), {cfg_.model_dim, h, w});
    }
    return out;
}

Tensor SsflModel::fuse_levels(const std::array<Tensor, kPyramidLevels>& enhanced) const {
    int64_t h1 = enhanced[0].shape()[1], w1 = enhanced[0].shape()[2];
    std::vector<Tensor> branches;
    for (int k = 0; k < kPyramidLevels; ++k) {
        const auto& lp = levels_[k];
        Tensor up = bilinear_upsample(enhanced[k], h1, w1);
        Tensor x = relu(conv1x1(up, lp.fuse1_w, lp.fuse1_b));
        x = relu(conv1x1(x, lp.fuse2_w, lp.fuse2_b));
        branches.push_back(x);
    }
    Tensor stacked = concat(branches, 0);  // (3*fused_hidden, H1, W1)
    return conv1x1(stacked, final_w_, final_b_);
}

IdAwareMap SsflModel::forward(const FeaturePyramid& prev, const FeaturePyramid& cur) const {
    IdAwareMap m;
    m.map = fuse_levels(interaction_enhance(prev, cur));
    m.frame_index = cur.frame_index;
    m.stride = cfg_.stride;
    return m;
}

Tensor SsflModel::extract_short_term(const IdAwareMap& map, const std::vector<Box>& boxes,
                                     Mode mode) {
    if (boxes.empty())
        return Tensor::zeros({0, cfg_.short_feature_dim()});
    std::vector<Tensor> rows;
    rows.reserve(boxes.size());
    for (const Box& b : boxes) {
        Tensor crop = roi_align(map.map, b, map.stride);
        rows.push_back(reshape(crop, {1, cfg_.short_feature_dim()}));
    }
    Tensor batch = rows.size() == 1 ? rows[0] : concat(rows, 0);
    return batch_norm(batch, bn_, mode);
}

Tensor short_term_similarity(const Tensor& track_feats, const Tensor& det_feats) {
    return cosine_similarity_clamped(track_feats, det_feats);
}

}  // namespace mot
