#include "nsm/domain.hpp"

namespace nsm {

Vec2d boundary_point(Domain d, double t) {
    t -= std::floor(t);
    if (d == Domain::disk) {
        const double a = 2.0 * M_PI * t;
        return {0.5 + 0.5 * std::cos(a), 0.5 + 0.5 * std::sin(a)};
    }
    const double s = 4.0 * t;
    if (s < 1.0) return {s, 0.0};
    if (s < 2.0) return {1.0, s - 1.0};
    if (s < 3.0) return {3.0 - s, 1.0};
    return {0.0, 4.0 - s};
}

std::vector<Vec2d> domain_corners(Domain d) {
    if (d == Domain::disk) {
        // The disk has no corners; pin the four axis-aligned boundary points.
        return {{1.0, 0.5}, {0.5, 1.0}, {0.0, 0.5}, {0.5, 0.0}};
    }
    return {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
}

std::vector<Vec2d> sample_boundary(Domain d, int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vec2d> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        out.push_back(boundary_point(d, (static_cast<double>(i) + u(rng)) / n));
    }
    return out;
}

} // namespace nsm
