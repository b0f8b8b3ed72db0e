#include "nsm/compose/compose.hpp"

#include <cmath>
#include <iostream>

namespace nsm::compose {

Vec3d estimate_normal(const Mat<double, 3, 2>& J) {
    const Vec<double, 3> c0 = column(J, 0);
    const Vec<double, 3> c1 = column(J, 1);
    Vec<double, 3> n = cross3(c0, c1);
    const double l = norm(n);
    if (l < 1e-12) throw SingularJacobianError("estimate_normal: degenerate Jacobian");
    return {n[0] / l, n[1] / l, n[2] / l};
}

Rotation2 landmark_rotation(std::span<const Vec2d> P, std::span<const Vec2d> Q) {
    if (P.size() != Q.size()) throw ConfigError("landmark_rotation: size mismatch");
    if (P.size() < 2) {
        std::cerr << "warning: landmark_rotation needs >= 2 pairs, using identity\n";
        return Rotation2::identity();
    }
    Vec2d pm = {0, 0}, qm = {0, 0};
    for (std::size_t i = 0; i < P.size(); ++i) {
        pm[0] += P[i][0]; pm[1] += P[i][1];
        qm[0] += Q[i][0]; qm[1] += Q[i][1];
    }
    const double inv = 1.0 / static_cast<double>(P.size());
    pm[0] *= inv; pm[1] *= inv; qm[0] *= inv; qm[1] *= inv;

    // angle maximizing sum of q . R p over centered pairs
    double s = 0.0, c = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
        const double px = P[i][0] - pm[0], py = P[i][1] - pm[1];
        const double qx = Q[i][0] - qm[0], qy = Q[i][1] - qm[1];
        c += px * qx + py * qy;
        s += px * qy - py * qx;
    }
    const double l = std::hypot(c, s);
    if (l < 1e-15) {
        std::cerr << "warning: landmark_rotation is underdetermined, using identity\n";
        return Rotation2::identity();
    }
    return Rotation2{c / l, s / l};
}

void pin_corners(SurfaceMapHandle& h) {
    for (const auto& corner : domain_corners(h.domain)) {
        h.P.push_back(corner);
        h.Q.push_back(corner);
    }
}

Vec2d warp_point(const net::NeuralMap& warp, const Rotation2& rot, const Vec2d& p) {
    const auto rp = rot.apply(p);
    const auto img = net::forward<double>(warp, {rp[0], rp[1]});
    return {img[0], img[1]};
}

std::vector<PushedVertex> push_mesh_through(const SurfaceMapHandle& h,
                                            std::span<const Vec2d> preimages) {
    std::vector<PushedVertex> out;
    out.reserve(preimages.size());
    constexpr double tol = 1e-9;
    for (const auto& p : preimages) {
        const Vec2d w = warp_point(h.warp, h.rot, p);
        PushedVertex v;
        v.out_of_domain = !(w[0] >= -tol && w[0] <= 1.0 + tol && w[1] >= -tol && w[1] <= 1.0 + tol);
        const Vec2d wc = {std::clamp(w[0], 0.0, 1.0), std::clamp(w[1], 0.0, 1.0)};
        const auto img = eval_surface<double>(h.target, v.out_of_domain ? wc[0] : w[0],
                                              v.out_of_domain ? wc[1] : w[1]);
        v.position = {img[0], img[1], img[2]};
        out.push_back(v);
    }
    return out;
}

Vec3d collection_point(const CollectionHandle& h, std::size_t i, const Vec2d& p) {
    const Vec2d w = warp_point(h.warps[i], h.rots[i], p);
    const auto img = eval_surface<double>(h.surfaces[i], w[0], w[1]);
    return {img[0], img[1], img[2]};
}

Vec3d route(const CollectionHandle& h, std::span<const std::size_t> path, const Vec2d& p) {
    if (path.empty()) throw ConfigError("route: empty path");
    // Every map in the collection is defined through the common domain, so
    // only the final surface determines the image.
    return collection_point(h, path.back(), p);
}

} // namespace nsm::compose
