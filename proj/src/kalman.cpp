#include "mot/kalman.hpp"

#include <cmath>
#include <stdexcept>

namespace mot {

namespace {

constexpr double kStdPos = 1.0 / 20.0;
constexpr double kStdVel = 1.0 / 160.0;
constexpr int N = 8;

inline double& at(std::array<double, 64>& m, int r, int c) { return m[r * N + c]; }
inline double at(const std::array<double, 64>& m, int r, int c) { return m[r * N + c]; }

// solves the 4x4 system S X = B (B is 4x8) in place via Gaussian elimination
void solve4(std::array<double, 16> s, std::array<double, 32>& b) {
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::fabs(s[r * 4 + col]) > std::fabs(s[piv * 4 + col])) piv = r;
        if (s[piv * 4 + col] == 0.0) throw std::runtime_error("kalman: singular innovation");
        if (piv != col) {
            for (int c = 0; c < 4; ++c) std::swap(s[col * 4 + c], s[piv * 4 + c]);
            for (int c = 0; c < 8; ++c) std::swap(b[col * 8 + c], b[piv * 8 + c]);
        }
        double inv = 1.0 / s[col * 4 + col];
        for (int c = 0; c < 4; ++c) s[col * 4 + c] *= inv;
        for (int c = 0; c < 8; ++c) b[col * 8 + c] *= inv;
        for (int r = 0; r < 4; ++r) {
            if (r == col) continue;
            double f = s[r * 4 + col];
            if (f == 0.0) continue;
            for (int c = 0; c < 4; ++c) s[r * 4 + c] -= f * s[col * 4 + c];
            for (int c = 0; c < 8; ++c) b[r * 8 + c] -= f * b[col * 8 + c];
        }
    }
}

}  // namespace

void KalmanBoxFilter::initiate(const Box& b) {
    mean_ = {b.cx(), b.cy(), b.w, b.h, 0, 0, 0, 0};
    cov_.fill(0.0);
    double h = b.h;
    double sp = 2.0 * kStdPos * h;
    // velocity prior is weakly informative so a few consistent measurements
    // pin the velocity almost exactly
    double sv = h;
    for (int i = 0; i < 4; ++i) at(cov_, i, i) = sp * sp;
    for (int i = 4; i < 8; ++i) at(cov_, i, i) = sv * sv;
    initialized_ = true;
}

Box KalmanBoxFilter::predict() {
    if (!initialized_) throw std::runtime_error("kalman: predict before initiate");
    // x <- F x with F = [I I; 0 I]
    for (int i = 0; i < 4; ++i) mean_[i] += mean_[i + 4];

    // P <- F P F^T + Q
    std::array<double, 64> p = cov_;
    // F P: row i (<4) += row i+4
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < N; ++c) at(p, i, c) += at(p, i + 4, c);
    // (F P) F^T: col j (<4) += col j+4
    for (int r = 0; r < N; ++r)
        for (int j = 0; j < 4; ++j) at(p, r, j) += at(p, r, j + 4);
    double h = mean_[3];
    double qp = kStdPos * h, qv = kStdVel * h;
    for (int i = 0; i < 4; ++i) at(p, i, i) += qp * qp;
    for (int i = 4; i < 8; ++i) at(p, i, i) += qv * qv;
    cov_ = p;
    return current_box();
}

void KalmanBoxFilter::update(const Box& b) {
    if (!initialized_) throw std::runtime_error("kalman: update before initiate");
    double h = mean_[3];
    double rp = kStdPos * h;
    // S = H P H^T + R (top-left 4x4 block of P plus R)
    std::array<double, 16> s{};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) s[r * 4 + c] = at(cov_, r, c);
    for (int i = 0; i < 4; ++i) s[i * 4 + i] += rp * rp;

    // K^T = S^{-1} (H P) ; H P is the top 4 rows of P
    std::array<double, 32> hp{};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < N; ++c) hp[r * 8 + c] = at(cov_, r, c);
    solve4(s, hp);  // hp now holds K^T (4x8)

    double z[4] = {b.cx(), b.cy(), b.w, b.h};
    double innov[4];
    for (int i = 0; i < 4; ++i) innov[i] = z[i] - mean_[i];

    for (int i = 0; i < N; ++i) {
        double delta = 0.0;
        for (int j = 0; j < 4; ++j) delta += hp[j * 8 + i] * innov[j];
        mean_[i] += delta;
    }

    // P <- P - K S K^T = P - (H P)^T S^{-1} (H P) = P - (HP)^T * hp
    std::array<double, 64> hp_orig{};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < N; ++c) hp_orig[r * 8 + c] = at(cov_, r, c);
    for (int r = 0; r < N; ++r)
        for (int c = 0; c < N; ++c) {
            double d = 0.0;
            for (int j = 0; j < 4; ++j) d += hp_orig[j * 8 + r] * hp[j * 8 + c];
            at(cov_, r, c) -= d;
        }
    // symmetrize against drift
    for (int r = 0; r < N; ++r)
        for (int c = r + 1; c < N; ++c) {
            double v = 0.5 * (at(cov_, r, c) + at(cov_, c, r));
            at(cov_, r, c) = v;
            at(cov_, c, r) = v;
        }
}

Box KalmanBoxFilter::current_box() const {
    double w = std::max(1.0, mean_[2]);
    double h = std::max(1.0, mean_[3]);
    return Box{mean_[0] - 0.5 * w, mean_[1] - 0.5 * h, w, h};
}

}  // namespace mot
