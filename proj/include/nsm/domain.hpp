#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "nsm/ad/tape.hpp"

namespace nsm {

using Vec2d = std::array<double, 2>;
using Vec3d = std::array<double, 3>;

// The canonical 2D domain all maps share. Square is [0,1]^2; disk is centered
// at (0.5, 0.5) with radius 0.5.
enum class Domain { square, disk };

inline constexpr Vec2d kDomainCenter = {0.5, 0.5};

// Signed distance to the domain boundary: negative inside, zero on the
// boundary, positive outside.
template <class S>
S square_signed_distance(const S& x, const S& y) {
    using nsm::ad::abs;
    using nsm::ad::max;
    using nsm::ad::min;
    using nsm::ad::hypot2;
    using std::abs;
    using std::max;
    using std::min;
    const S qx = abs(x - S(0.5)) - S(0.5);
    const S qy = abs(y - S(0.5)) - S(0.5);
    return hypot2(max(qx, S(0.0)), max(qy, S(0.0))) + min(max(qx, qy), S(0.0));
}

template <class S>
S disk_signed_distance(const S& x, const S& y) {
    using nsm::ad::hypot2;
    return hypot2(x - S(0.5), y - S(0.5)) - S(0.5);
}

template <class S>
S signed_distance(Domain d, const S& x, const S& y) {
    return d == Domain::square ? square_signed_distance(x, y) : disk_signed_distance(x, y);
}

// sigma: squared signed distance to the domain boundary.
template <class S>
S boundary_sigma(Domain d, const S& x, const S& y) {
    const S s = signed_distance(d, x, y);
    return s * s;
}

// Point on the domain boundary at perimeter fraction t in [0,1). The square
// starts at (0,0) and walks counterclockwise; the disk starts at (1, 0.5).
Vec2d boundary_point(Domain d, double t);

// Fixed corner positions used as pinning keypoints (square domain).
std::vector<Vec2d> domain_corners(Domain d);

// n points stratified along the boundary: sample i is at fraction
// (i + u_i)/n with u_i uniform from rng.
std::vector<Vec2d> sample_boundary(Domain d, int n, std::mt19937_64& rng);

// 2D rotation applied about the domain center.
struct Rotation2 {
    double c = 1.0;
    double s = 0.0;

    static Rotation2 identity() { return {}; }
    static Rotation2 from_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }

    double angle() const { return std::atan2(s, c); }

    template <class S>
    std::array<S, 2> apply(const S& x, const S& y) const {
        const S dx = x - S(kDomainCenter[0]);
        const S dy = y - S(kDomainCenter[1]);
        return {dx * c - dy * s + S(kDomainCenter[0]), dx * s + dy * c + S(kDomainCenter[1])};
    }

    Vec2d apply(const Vec2d& p) const {
        auto r = apply<double>(p[0], p[1]);
        return {r[0], r[1]};
    }
};

} // namespace nsm
