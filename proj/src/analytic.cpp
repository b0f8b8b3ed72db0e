#include "nsm/analytic/surface.hpp"

namespace nsm::analytic {

const char* surface_kind_name(SurfaceKind k) {
    switch (k) {
        case SurfaceKind::plane: return "plane";
        case SurfaceKind::scaled_plane: return "scaled_plane";
        case SurfaceKind::hemisphere: return "hemisphere";
        case SurfaceKind::cylinder_patch: return "cylinder_patch";
        case SurfaceKind::saddle: return "saddle";
        case SurfaceKind::torus_patch: return "torus_patch";
    }
    return "plane";
}

SurfaceKind surface_kind_from_name(const std::string& name) {
    if (name == "plane") return SurfaceKind::plane;
    if (name == "scaled_plane") return SurfaceKind::scaled_plane;
    if (name == "hemisphere") return SurfaceKind::hemisphere;
    if (name == "cylinder_patch") return SurfaceKind::cylinder_patch;
    if (name == "saddle") return SurfaceKind::saddle;
    if (name == "torus_patch") return SurfaceKind::torus_patch;
    throw ConfigError("unknown analytic surface kind: " + name);
}

void validate(const AnalyticSurface& s) {
    switch (s.kind) {
        case SurfaceKind::plane:
            break;
        case SurfaceKind::scaled_plane:
        case SurfaceKind::hemisphere:
        case SurfaceKind::saddle:
            if (s.p0 <= 0.0) throw ConfigError("analytic surface: parameter must be positive");
            break;
        case SurfaceKind::cylinder_patch:
            if (s.p0 <= 0.0 || s.p1 <= 0.0 || s.p2 <= 0.0) {
                throw ConfigError("cylinder_patch: radius, arc and height must be positive");
            }
            break;
        case SurfaceKind::torus_patch:
            if (s.p0 <= 0.0 || s.p1 <= 0.0 || s.p2 <= 0.0 || s.p3 <= 0.0) {
                throw ConfigError("torus_patch: all parameters must be positive");
            }
            if (s.p3 >= 2.0 * M_PI) throw ConfigError("torus_patch: v extent must stay below 2*pi");
            break;
    }
}

namespace {

void check_domain(double u, double v) {
    constexpr double tol = 1e-9;
    if (!(u >= -tol && u <= 1.0 + tol && v >= -tol && v <= 1.0 + tol)) {
        throw OutOfDomainError("analytic surface evaluated outside the unit square");
    }
}

} // namespace

std::array<double, 3> eval_checked(const AnalyticSurface& s, double u, double v) {
    check_domain(u, v);
    return eval<double>(s, u, v);
}

Mat<double, 3, 2> eval_jacobian_checked(const AnalyticSurface& s, double u, double v) {
    check_domain(u, v);
    return eval_jacobian<double>(s, u, v);
}

Mat<double, 2, 2> exact_metric(const AnalyticSurface& s, double u, double v) {
    Mat<double, 2, 2> m;
    const double uc = u - 0.5, vc = v - 0.5;
    switch (s.kind) {
        case SurfaceKind::plane:
            return Mat<double, 2, 2>::identity();
        case SurfaceKind::scaled_plane:
            m = Mat<double, 2, 2>::identity();
            m(0, 0) = m(1, 1) = s.p0 * s.p0;
            return m;
        case SurfaceKind::hemisphere: {
            const double c = kHemisphereChartScale * s.p0;
            const double x = uc * c, y = vc * c;
            const double z2 = s.p0 * s.p0 - x * x - y * y;
            m(0, 0) = c * c * (1.0 + x * x / z2);
            m(1, 1) = c * c * (1.0 + y * y / z2);
            m(0, 1) = m(1, 0) = c * c * x * y / z2;
            return m;
        }
        case SurfaceKind::cylinder_patch:
            m(0, 0) = s.p0 * s.p0 * s.p1 * s.p1;
            m(1, 1) = s.p2 * s.p2;
            m(0, 1) = m(1, 0) = 0.0;
            return m;
        case SurfaceKind::saddle: {
            const double a2 = s.p0 * s.p0;
            m(0, 0) = 1.0 + a2 * vc * vc;
            m(1, 1) = 1.0 + a2 * uc * uc;
            m(0, 1) = m(1, 0) = a2 * uc * vc;
            return m;
        }
        case SurfaceKind::torus_patch: {
            const double ring = s.p0 + s.p1 * std::cos(vc * s.p3);
            m(0, 0) = s.p2 * s.p2 * ring * ring;
            m(1, 1) = s.p1 * s.p1 * s.p3 * s.p3;
            m(0, 1) = m(1, 0) = 0.0;
            return m;
        }
    }
    throw ConfigError("unknown analytic surface kind");
}

namespace {

// Eigenvalues of a symmetric 2x2 matrix, a route distinct from the
// trace/inverse arithmetic used by the energies module.
std::array<double, 2> sym_eigenvalues(const Mat<double, 2, 2>& m) {
    const double t = 0.5 * (m(0, 0) + m(1, 1));
    const double d = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double r = std::sqrt(std::max(t * t - d, 0.0));
    return {t + r, t - r};
}

} // namespace

double exact_dirichlet_density(const AnalyticSurface& s, double u, double v, double eps) {
    const auto lam = sym_eigenvalues(exact_metric(s, u, v));
    return lam[0] + lam[1] + 1.0 / (lam[0] + eps) + 1.0 / (lam[1] + eps);
}

double exact_conformal_density(const AnalyticSurface& s, double u, double v) {
    const auto lam = sym_eigenvalues(exact_metric(s, u, v));
    const double c = (lam[0] + lam[1]) / (lam[0] * lam[0] + lam[1] * lam[1]);
    const double a = c * lam[0] - 1.0;
    const double b = c * lam[1] - 1.0;
    return a * a + b * b;
}

} // namespace nsm::analytic
