#pragma once

#include <array>
#include <cmath>
#include <string>

#include "nsm/ad/dual2.hpp"
#include "nsm/errors.hpp"
#include "nsm/linalg.hpp"

namespace nsm::analytic {

enum class SurfaceKind { plane, scaled_plane, hemisphere, cylinder_patch, saddle, torus_patch };

// Closed-form parametric surfaces over the unit square, with exact Jacobians.
// Parameter meanings:
//   plane          -
//   scaled_plane   p0 = scale
//   hemisphere     p0 = radius   (orthographic chart over a disk inscribed in
//                                 the square; pole at the domain center)
//   cylinder_patch p0 = radius, p1 = arc (radians), p2 = height
//   saddle         p0 = a in z = a*u~*v~ with centered coordinates
//   torus_patch    p0 = R, p1 = r, p2 = u-extent (radians), p3 = v-extent
struct AnalyticSurface {
    SurfaceKind kind = SurfaceKind::plane;
    double p0 = 1.0, p1 = 1.0, p2 = 1.0, p3 = 1.0;

    static AnalyticSurface plane() { return {SurfaceKind::plane}; }
    static AnalyticSurface scaled_plane(double s) { return {SurfaceKind::scaled_plane, s}; }
    static AnalyticSurface hemisphere(double r) { return {SurfaceKind::hemisphere, r}; }
    static AnalyticSurface cylinder_patch(double r, double arc, double height = 1.0) {
        return {SurfaceKind::cylinder_patch, r, arc, height};
    }
    static AnalyticSurface saddle(double a) { return {SurfaceKind::saddle, a}; }
    static AnalyticSurface torus_patch(double R, double r, double ue, double ve) {
        return {SurfaceKind::torus_patch, R, r, ue, ve};
    }
};

const char* surface_kind_name(SurfaceKind k);
SurfaceKind surface_kind_from_name(const std::string& name);
void validate(const AnalyticSurface& s);

// Scale of the hemisphere's inscribed-disk chart: the square's corners map to
// radius ~0.92 r, keeping the sqrt strictly positive over the whole domain.
inline constexpr double kHemisphereChartScale = 1.3;

namespace detail {

// sqrt clamped away from zero so warped points slightly outside the domain
// stay evaluable during optimization; exact for in-domain points.
template <class S>
S safe_sqrt(const S& x) {
    using std::sqrt;
    using nsm::ad::sqrt;
    using nsm::ad::max;
    using std::max;
    return sqrt(max(x, S(1e-12)));
}

} // namespace detail

template <class S>
std::array<S, 3> eval(const AnalyticSurface& s, const S& u, const S& v) {
    using std::sin;
    using std::cos;
    using nsm::ad::sin;
    using nsm::ad::cos;
    switch (s.kind) {
        case SurfaceKind::plane:
            return {u, v, S(0.0)};
        case SurfaceKind::scaled_plane:
            return {u * s.p0, v * s.p0, S(0.0)};
        case SurfaceKind::hemisphere: {
            const double c = kHemisphereChartScale * s.p0;
            const S x = (u - 0.5) * c;
            const S y = (v - 0.5) * c;
            return {x, y, detail::safe_sqrt(S(s.p0 * s.p0) - x * x - y * y)};
        }
        case SurfaceKind::cylinder_patch: {
            const S a = u * s.p1;
            return {sin(a) * s.p0, cos(a) * s.p0, v * s.p2};
        }
        case SurfaceKind::saddle: {
            const S x = u - 0.5;
            const S y = v - 0.5;
            return {x, y, x * y * s.p0};
        }
        case SurfaceKind::torus_patch: {
            const S a = (u - 0.5) * s.p2;
            const S b = (v - 0.5) * s.p3;
            const S ring = S(s.p0) + cos(b) * s.p1;
            return {ring * cos(a), ring * sin(a), sin(b) * s.p1};
        }
    }
    throw ConfigError("unknown analytic surface kind");
}

template <class S>
Mat<S, 3, 2> eval_jacobian(const AnalyticSurface& s, const S& u, const S& v) {
    using std::sin;
    using std::cos;
    using nsm::ad::sin;
    using nsm::ad::cos;
    Mat<S, 3, 2> j;
    for (auto& e : j.a) e = S(0.0);
    switch (s.kind) {
        case SurfaceKind::plane:
            j(0, 0) = S(1.0);
            j(1, 1) = S(1.0);
            return j;
        case SurfaceKind::scaled_plane:
            j(0, 0) = S(s.p0);
            j(1, 1) = S(s.p0);
            return j;
        case SurfaceKind::hemisphere: {
            const double c = kHemisphereChartScale * s.p0;
            const S x = (u - 0.5) * c;
            const S y = (v - 0.5) * c;
            const S z = detail::safe_sqrt(S(s.p0 * s.p0) - x * x - y * y);
            j(0, 0) = S(c);
            j(1, 1) = S(c);
            j(2, 0) = -x * c / z;
            j(2, 1) = -y * c / z;
            return j;
        }
        case SurfaceKind::cylinder_patch: {
            const S a = u * s.p1;
            j(0, 0) = cos(a) * (s.p0 * s.p1);
            j(1, 0) = -sin(a) * (s.p0 * s.p1);
            j(2, 1) = S(s.p2);
            return j;
        }
        case SurfaceKind::saddle:
            j(0, 0) = S(1.0);
            j(1, 1) = S(1.0);
            j(2, 0) = (v - 0.5) * s.p0;
            j(2, 1) = (u - 0.5) * s.p0;
            return j;
        case SurfaceKind::torus_patch: {
            const S a = (u - 0.5) * s.p2;
            const S b = (v - 0.5) * s.p3;
            const S ring = S(s.p0) + cos(b) * s.p1;
            j(0, 0) = -ring * sin(a) * s.p2;
            j(1, 0) = ring * cos(a) * s.p2;
            j(0, 1) = -sin(b) * cos(a) * (s.p1 * s.p3);
            j(1, 1) = -sin(b) * sin(a) * (s.p1 * s.p3);
            j(2, 1) = cos(b) * (s.p1 * s.p3);
            return j;
        }
    }
    throw ConfigError("unknown analytic surface kind");
}

// Strict double-precision entry points used outside optimization loops:
// reject points outside the closed unit square.
std::array<double, 3> eval_checked(const AnalyticSurface& s, double u, double v);
Mat<double, 3, 2> eval_jacobian_checked(const AnalyticSurface& s, double u, double v);

// First fundamental form assembled directly from the closed-form metric
// expressions (independent of the Jacobian-based route in the energies
// module); used as a test oracle.
Mat<double, 2, 2> exact_metric(const AnalyticSurface& s, double u, double v);
double exact_dirichlet_density(const AnalyticSurface& s, double u, double v, double eps);
double exact_conformal_density(const AnalyticSurface& s, double u, double v);

} // namespace nsm::analytic
