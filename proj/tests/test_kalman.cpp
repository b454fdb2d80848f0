#include <doctest.h>

#include <cmath>

#include "mot/kalman.hpp"

using namespace mot;

TEST_CASE("zero-velocity prediction repeats the last box") {
    KalmanBoxFilter kf;
    Box b{10, 20, 30, 40};
    kf.initiate(b);
    Box p = kf.predict();
    CHECK(p.cx() == doctest::Approx(b.cx()).epsilon(1e-12));
    CHECK(p.cy() == doctest::Approx(b.cy()).epsilon(1e-12));
    CHECK(p.w == doctest::Approx(b.w).epsilon(1e-12));
    CHECK(p.h == doctest::Approx(b.h).epsilon(1e-12));
}

TEST_CASE("prediction shifts by the estimated velocity") {
    KalmanBoxFilter kf;
    kf.initiate(Box{0, 0, 20, 50});
    // feed a constant-velocity track so the filter learns (2, 0)
    for (int t = 1; t <= 30; ++t) {
        kf.predict();
        kf.update(Box{2.0 * t, 0, 20, 50});
    }
    double cx_before = kf.current_box().cx();
    Box p = kf.predict();
    CHECK(p.cx() - cx_before == doctest::Approx(2.0).epsilon(1e-2));
}

TEST_CASE("velocity estimate converges on a noiseless linear trajectory") {
    KalmanBoxFilter kf;
    kf.initiate(Box{5, 7, 16, 40});
    for (int t = 1; t <= 10; ++t) {
        kf.predict();
        kf.update(Box{5 + 3.0 * t, 7 - 1.5 * t, 16, 40});
    }
    CHECK(std::fabs(kf.velocity(0) - 3.0) < 1e-3);
    CHECK(std::fabs(kf.velocity(1) + 1.5) < 1e-3);
}

TEST_CASE("covariance calls are guarded before initiation") {
    KalmanBoxFilter kf;
    CHECK_THROWS_AS(kf.predict(), std::runtime_error);
    CHECK_THROWS_AS(kf.update(Box{0, 0, 1, 1}), std::runtime_error);
}
