#include "mot/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mot {

double iou(const Box& a, const Box& b) {
    double x1 = std::max(a.x, b.x);
    double y1 = std::max(a.y, b.y);
    double x2 = std::min(a.x + a.w, b.x + b.w);
    double y2 = std::min(a.y + a.h, b.y + b.h);
    double iw = x2 - x1, ih = y2 - y1;
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    double inter = iw * ih;
    double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<std::vector<double>> iou_matrix(const std::vector<Box>& tracks,
                                            const std::vector<Box>& dets) {
    std::vector<std::vector<double>> m(tracks.size(), std::vector<double>(dets.size(), 0.0));
    for (size_t j = 0; j < tracks.size(); ++j)
        for (size_t i = 0; i < dets.size(); ++i) m[j][i] = iou(tracks[j], dets[i]);
    return m;
}

Tensor roi_align(const Tensor& map, const Box& box, double stride) {
    if (map.ndim() != 3)
        throw std::invalid_argument("roi_align expects (C,H,W) map, got " +
                                    shape_str(map.shape()));
    if (stride <= 0.0) throw std::invalid_argument("roi_align: stride must be positive");
    int64_t C = map.shape()[0], H = map.shape()[1], W = map.shape()[2];

    // clip box to the map extent in image coordinates
    double img_w = static_cast<double>(W) * stride;
    double img_h = static_cast<double>(H) * stride;
    double x0 = std::clamp(box.x, 0.0, img_w);
    double y0 = std::clamp(box.y, 0.0, img_h);
    double x1 = std::clamp(box.x + box.w, 0.0, img_w);
    double y1 = std::clamp(box.y + box.h, 0.0, img_h);
    if (x1 - x0 <= 0.0 || y1 - y0 <= 0.0)
        throw std::invalid_argument("roi_align: box clips to zero area");

    // grid-index coordinates; cell centers sit at integer indices
    double gx0 = x0 / stride - 0.5, gx1 = x1 / stride - 0.5;
    double gy0 = y0 / stride - 0.5, gy1 = y1 / stride - 0.5;
    double bin_w = (gx1 - gx0) / static_cast<double>(kRoiBins);
    double bin_h = (gy1 - gy0) / static_cast<double>(kRoiBins);

    constexpr int64_t S = kRoiSamplesPerBin;
    constexpr int64_t B = kRoiBins;
    struct Sample {
        int64_t x0, x1, y0, y1;
        double wx0, wx1, wy0, wy1;
    };
    // sample layout is identical for every channel; precompute taps
    std::vector<Sample> taps(B * B * S * S);
    for (int64_t by = 0; by < B; ++by)
        for (int64_t bx = 0; bx < B; ++bx)
            for (int64_t sy = 0; sy < S; ++sy)
                for (int64_t sx = 0; sx < S; ++sx) {
                    double u = gx0 + bin_w * (static_cast<double>(bx) +
                                              (static_cast<double>(sx) + 0.5) / S);
                    double v = gy0 + bin_h * (static_cast<double>(by) +
                                              (static_cast<double>(sy) + 0.5) / S);
                    u = std::clamp(u, 0.0, static_cast<double>(W - 1));
                    v = std::clamp(v, 0.0, static_cast<double>(H - 1));
                    Sample s;
                    s.x0 = static_cast<int64_t>(std::floor(u));
                    s.x0 = std::clamp<int64_t>(s.x0, 0, W - 1);
                    s.x1 = std::min<int64_t>(s.x0 + 1, W - 1);
                    s.y0 = static_cast<int64_t>(std::floor(v));
                    s.y0 = std::clamp<int64_t>(s.y0, 0, H - 1);
                    s.y1 = std::min<int64_t>(s.y0 + 1, H - 1);
                    double fx = u - static_cast<double>(s.x0);
                    double fy = v - static_cast<double>(s.y0);
                    s.wx0 = 1.0 - fx;
                    s.wx1 = fx;
                    s.wy0 = 1.0 - fy;
                    s.wy1 = fy;
                    taps[((by * B + bx) * S + sy) * S + sx] = s;
                }

    std::vector<double> out(C * B * B, 0.0);
    const auto& src = map.node()->data;
    const double inv_samples = 1.0 / static_cast<double>(S * S);
    for (int64_t c = 0; c < C; ++c) {
        const double* plane = src.data() + c * H * W;
        for (int64_t bin = 0; bin < B * B; ++bin) {
            double acc = 0.0;
            for (int64_t s = 0; s < S * S; ++s) {
                const Sample& t = taps[bin * S * S + s];
                acc += t.wy0 * (t.wx0 * plane[t.y0 * W + t.x0] + t.wx1 * plane[t.y0 * W + t.x1]) +
                       t.wy1 * (t.wx0 * plane[t.y1 * W + t.x0] + t.wx1 * plane[t.y1 * W + t.x1]);
            }
            out[c * B * B + bin] = acc * inv_samples;
        }
    }

    auto mn = map.node();
    return custom_op({C, kRoiBins, kRoiBins}, std::move(out), {map},
                     [mn, taps, C, H, W, inv_samples](detail::Node& self) {
                         constexpr int64_t S = kRoiSamplesPerBin;
                         constexpr int64_t B = kRoiBins;
                         mn->ensure_grad();
                         for (int64_t c = 0; c < C; ++c) {
                             double* gp = mn->grad.data() + c * H * W;
                             const double* og = self.grad.data() + c * B * B;
                             for (int64_t bin = 0; bin < B * B; ++bin) {
                                 double g = og[bin] * inv_samples;
                                 for (int64_t s = 0; s < S * S; ++s) {
                                     const Sample& t = taps[bin * S * S + s];
                                     gp[t.y0 * W + t.x0] += t.wy0 * t.wx0 * g;
                                     gp[t.y0 * W + t.x1] += t.wy0 * t.wx1 * g;
                                     gp[t.y1 * W + t.x0] += t.wy1 * t.wx0 * g;
                                     gp[t.y1 * W + t.x1] += t.wy1 * t.wx1 * g;
                                 }
                             }
                         }
                     });
}

}  // namespace mot
