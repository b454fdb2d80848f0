#pragma once

#include <vector>

#include "mot/tensor.hpp"

namespace mot {

/// Axis-aligned box, top-left corner plus size, in image pixels.
struct Box {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double area() const { return w * h; }
    double cx() const { return x + 0.5 * w; }
    double cy() const { return y + 0.5 * h; }
    bool valid() const { return w > 0.0 && h > 0.0; }
};

/// A detector output: box plus confidence. gt_id records the generating
/// ground-truth identity for synthetic data (-1 for false positives); it is
/// diagnostic only and never consulted by the tracker.
struct Detection {
    Box box;
    double score = 0.0;
    int64_t gt_id = -1;
};

/// Intersection over union in [0,1]; 0 for disjoint boxes.
double iou(const Box& a, const Box& b);

/// Entry (j,i) = iou(tracks[j], dets[i]). Empty inputs give an empty matrix.
std::vector<std::vector<double>> iou_matrix(const std::vector<Box>& tracks,
                                            const std::vector<Box>& dets);

inline constexpr int64_t kRoiBins = 4;         // output grid per side
inline constexpr int64_t kRoiSamplesPerBin = 2;  // sub-samples per bin side

/// RoIAlign: bilinear sampling of a (C,H,W) map over `box` (image pixels,
/// `stride` maps image to grid coordinates), 4x4 output bins averaged over
/// 2x2 sample points each. Sampling coordinates clamp to the map border;
/// differentiable with respect to the map. The box is clipped to the map
/// extent first; a box that clips to zero area is an error.
Tensor roi_align(const Tensor& map, const Box& box, double stride);

}  // namespace mot
