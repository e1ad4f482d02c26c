#pragma once

#include <vector>

#include "instaloc/geometry.hpp"
#include "instaloc/random.hpp"

namespace instaloc::testing {

inline Rotation random_rotation(Rng& rng) {
    const Vec3 axis{rng.gaussian(), rng.gaussian(), rng.gaussian()};
    return Rotation::from_axis_angle(axis.norm() > 0 ? axis : Vec3{0, 0, 1},
                                     rng.uniform(0.0, 2.0 * kPi));
}

inline Pose random_pose(Rng& rng, double translation_span = 10.0) {
    return Pose(random_rotation(rng), {rng.uniform(-translation_span, translation_span),
                                       rng.uniform(-translation_span, translation_span),
                                       rng.uniform(-translation_span, translation_span)});
}

inline std::vector<Point3> random_points(Rng& rng, size_t n, double span = 5.0) {
    std::vector<Point3> pts;
    pts.reserve(n);
    for (size_t i = 0; i < n; ++i)
        pts.push_back({rng.uniform(-span, span), rng.uniform(-span, span), rng.uniform(-span, span)});
    return pts;
}

inline double max_abs_diff(const Mat3& a, const Mat3& b) {
    double m = 0.0;
    for (int i = 0; i < 9; ++i)
        m = std::max(m, std::abs(a.m[static_cast<size_t>(i)] - b.m[static_cast<size_t>(i)]));
    return m;
}

}  // namespace instaloc::testing
