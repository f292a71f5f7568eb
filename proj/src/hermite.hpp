#pragma once

// Cubic Hermite segments in any dimension and point-to-segment distance.

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace gfc::detail {

template <class Vec>
struct HermiteSegment {
    Vec p0, p1;  // endpoints
    Vec m0, m1;  // end derivatives with respect to the unit parameter

    Vec at(double t) const {
        double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * m1;
    }
    Vec d1(double t) const {
        double t2 = t * t;
        return (6 * t2 - 6 * t) * p0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * p1 + (3 * t2 - 2 * t) * m1;
    }
    Vec d2(double t) const {
        return (12 * t - 6) * p0 + (6 * t - 4) * m0 + (-12 * t + 6) * p1 + (6 * t - 2) * m1;
    }
};

struct Closest {
    double distance = std::numeric_limits<double>::infinity();
    double t = 0.0;
};

/// Closest point on the segment by sampling plus safeguarded Newton.
template <class Vec>
Closest closest_on(const HermiteSegment<Vec>& seg, const Vec& x) {
    Closest best;
    auto consider = [&](double t) {
        double d = (seg.at(t) - x).norm();
        if (d < best.distance) best = {d, t};
    };
    const int coarse = 8;
    for (int i = 0; i <= coarse; ++i) consider(static_cast<double>(i) / coarse);
    double t = best.t;
    for (int it = 0; it < 20; ++it) {
        Vec r = seg.at(t) - x;
        Vec c1 = seg.d1(t);
        double g = r.dot(c1);
        double h = c1.squaredNorm() + r.dot(seg.d2(t));
        if (!(h > 0)) break;
        double nt = std::clamp(t - g / h, 0.0, 1.0);
        if (std::fabs(nt - t) < 1e-15) {
            t = nt;
            break;
        }
        t = nt;
    }
    consider(t);
    return best;
}

}  // namespace gfc::detail
