#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mot/geometry.hpp"
#include "mot/nn.hpp"
#include "mot/tensor.hpp"

namespace mot {

inline constexpr int kPyramidLevels = 3;

/// Three-level backbone feature pyramid for one frame. Level k has shape
/// (channels[k], H_k, W_k) with H_{k+1} = ceil(H_k / 2).
struct FeaturePyramid {
    std::array<Tensor, kPyramidLevels> levels;
    std::array<double, kPyramidLevels> strides{8.0, 16.0, 32.0};
    int64_t frame_index = 0;
};

void validate_pyramid(const FeaturePyramid& p);

/// Fused discriminative map; all identity features are RoI-extracted from it.
struct IdAwareMap {
    Tensor map;  // (map_channels, H_1, W_1)
    int64_t frame_index = 0;
    double stride = 8.0;
};

/// Token matrix for one pyramid level of an adjacent frame pair. Rows
/// [0, split_point) belong to frame t-1, the rest to frame t.
struct TokenSequence {
    Tensor tokens;  // (2 * H_k * W_k, model_dim)
    int level = 0;
    int64_t split_point = 0;
};

struct SsflConfig {
    int64_t model_dim = 256;
    int64_t heads = 4;
    int64_t ffn_dim = 512;
    int64_t encoder_depth = 1;
    bool shared_encoder = false;  // one encoder stack reused across levels
    int64_t map_channels = 128;
    int64_t fused_hidden = 128;  // width of the per-level fusion convs
    std::array<int64_t, kPyramidLevels> pyramid_channels{16, 16, 16};
    int64_t h1 = 32, w1 = 32;  // level-1 grid; levels halve with ceil
    double stride = 8.0;
    bool positional_encoding = true;  // fixed 2D sinusoidal spatial code

    int64_t level_h(int k) const;
    int64_t level_w(int k) const;
    int64_t short_feature_dim() const { return map_channels * kRoiBins * kRoiBins; }
};

/// Single-shot feature learning: per-level input projection, cross-frame
/// encoder interaction, multi-level fusion into the ID-aware map, and
/// RoI-pooled short-term features.
class SsflModel {
public:
    SsflModel(SsflConfig cfg, uint64_t seed);

    TokenSequence build_tokens(const FeaturePyramid& prev, const FeaturePyramid& cur,
                               int level) const;
    std::array<Tensor, kPyramidLevels> interaction_enhance(const FeaturePyramid& prev,
                                                           const FeaturePyramid& cur) const;
    Tensor fuse_levels(const std::array<Tensor, kPyramidLevels>& enhanced) const;

    /// Full forward pass: pyramids of frames t-1 and t to the ID-aware map of
    /// frame t.
    IdAwareMap forward(const FeaturePyramid& prev, const FeaturePyramid& cur) const;

    /// RoI features for a batch of boxes: (B, map_channels*16) after the
    /// normalization stage. Train mode normalizes over this batch and
    /// advances running statistics.
    Tensor extract_short_term(const IdAwareMap& map, const std::vector<Box>& boxes, Mode mode);

    const SsflConfig& config() const { return cfg_; }
    /// Learned logit competing against the detections of a row with no
    /// ground-truth match (see inter_frame_loss).
    Tensor no_match_logit() const { return no_match_logit_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }

private:
    SsflConfig cfg_;
    ParameterStore store_;
    struct LevelParams {
        Tensor proj_w, proj_b;  // D_k -> model_dim
        std::vector<EncoderLayerParams> encoder;
        Tensor fuse1_w, fuse1_b;  // model_dim -> fused_hidden
        Tensor fuse2_w, fuse2_b;  // fused_hidden -> fused_hidden
        Tensor pos;               // fixed (H_k*W_k, model_dim)
    };
    std::array<LevelParams, kPyramidLevels> levels_;
    Tensor frame_embed_;  // (2, model_dim), learned, zero-initialized
    Tensor final_w_, final_b_;
    BatchNormState bn_;
    Tensor no_match_logit_;
};

/// Cosine similarity of short-term feature rows, clamped to [0,1].
Tensor short_term_similarity(const Tensor& track_feats, const Tensor& det_feats);

}  // namespace mot
