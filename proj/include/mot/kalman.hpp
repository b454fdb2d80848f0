#pragma once

#include <array>

#include "mot/geometry.hpp"

namespace mot {

/// Constant-velocity Kalman filter over (cx, cy, w, h) and their velocities.
/// Noise scales with box height, ByteTrack-style.
class KalmanBoxFilter {
public:
    void initiate(const Box& b);
    /// Time update; returns the predicted box. Covariance grows.
    Box predict();
    void update(const Box& b);

    bool initialized() const { return initialized_; }
    Box current_box() const;
    double velocity(int axis) const { return mean_[4 + axis]; }  // 0=cx,1=cy,2=w,3=h

private:
    bool initialized_ = false;
    std::array<double, 8> mean_{};
    std::array<double, 64> cov_{};  // row-major 8x8
};

}  // namespace mot
