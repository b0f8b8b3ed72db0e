#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "nsm/analytic/surface.hpp"
#include "nsm/domain.hpp"
#include "nsm/energy/energies.hpp"
#include "nsm/linalg.hpp"
#include "nsm/net/neural_map.hpp"

namespace nsm::compose {

using Surface = std::variant<net::NeuralMap, analytic::AnalyticSurface>;

// Image of a surface at a domain point.
template <class S>
std::array<S, 3> eval_surface(const Surface& surf, const S& u, const S& v) {
    if (const auto* n = std::get_if<net::NeuralMap>(&surf)) {
        return net::forward<S>(*n, {u, v});
    }
    return analytic::eval<S>(std::get<analytic::AnalyticSurface>(surf), u, v);
}

// Image and domain-Jacobian; for the analytic case the Jacobian is closed
// form, for the neural case it comes from two-tangent forward mode.
template <class S>
void eval_surface_with_jacobian(const Surface& surf, const S& u, const S& v,
                                std::array<S, 3>& image, Mat<S, 3, 2>& jac) {
    if (const auto* n = std::get_if<net::NeuralMap>(&surf)) {
        net::forward_with_jacobian<S, double>(n->arch, std::span<const double>(n->params),
                                              {u, v}, image, jac);
        return;
    }
    const auto& a = std::get<analytic::AnalyticSurface>(surf);
    image = analytic::eval<S>(a, u, v);
    jac = analytic::eval_jacobian<S>(a, u, v);
}

inline int surface_out_dim(const Surface& surf) {
    if (const auto* n = std::get_if<net::NeuralMap>(&surf)) return n->arch.out_dim;
    return 3;
}

// Reduction matrix A of the common-domain construction: the pseudoinverse of
// the source Jacobian restricted to the source tangent frame,
// A = (J^T J)^-1 J^T E with E an orthonormal basis of col(J). The effective
// Jacobian of the implicit map f with f(source(p)) = target(p) is then
// J_target * A, and its pullback metric feeds the distortion densities.
template <class S>
Mat<S, 2, 2> source_reduction(const Mat<S, 3, 2>& J) {
    using nsm::ad::value;
    using std::sqrt;
    using nsm::ad::sqrt;

    const Mat<S, 2, 2> G = pullback_metric(J);
    // smallest singular value via the metric's eigenvalues
    {
        const double t = 0.5 * (value(G(0, 0)) + value(G(1, 1)));
        const double d = value(det2(G));
        const double lam_min = t - std::sqrt(std::max(t * t - d, 0.0));
        if (!(lam_min > 1e-16)) { // sigma_min = sqrt(lam_min) > 1e-8
            throw SingularJacobianError("source Jacobian is rank deficient");
        }
    }
    const Mat<S, 2, 2> Ginv = inv2(G);

    // orthonormal tangent frame by Gram-Schmidt on the columns
    Vec<S, 3> c0 = column(J, 0);
    Vec<S, 3> c1 = column(J, 1);
    const S n0 = norm(c0);
    for (auto& x : c0) x = x / n0;
    const S proj = dot(c0, c1);
    for (int i = 0; i < 3; ++i) c1[i] -= proj * c0[i];
    const S n1 = norm(c1);
    for (auto& x : c1) x = x / n1;

    // (J^T E): 2x2
    Mat<S, 2, 2> JtE;
    for (int r = 0; r < 2; ++r) {
        JtE(r, 0) = J(0, r) * c0[0] + J(1, r) * c0[1] + J(2, r) * c0[2];
        JtE(r, 1) = J(0, r) * c1[0] + J(1, r) * c1[1] + J(2, r) * c1[2];
    }
    return matmul(Ginv, JtE);
}

// Effective Jacobian of the implicit surface-to-surface map (3D target). The
// source scalar is double when the source map is frozen and Var when the
// source itself is being warped (collections).
template <class SrcS, class S>
Mat<S, 3, 2> jacobian_of_f(const Mat<SrcS, 3, 2>& j_source, const Mat<S, 3, 2>& j_target) {
    const Mat<SrcS, 2, 2> A = source_reduction(j_source);
    Mat<S, 3, 2> r;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) {
            r(i, j) = j_target(i, 0) * A(0, j) + j_target(i, 1) * A(1, j);
        }
    }
    return r;
}

// Same construction for a 2D target (surface-to-plane parameterization).
template <class S>
Mat<S, 2, 2> jacobian_of_param(const Mat<double, 3, 2>& j_source, const Mat<S, 2, 2>& j_target) {
    const Mat<double, 2, 2> A = source_reduction(j_source);
    Mat<S, 2, 2> r;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            r(i, j) = j_target(i, 0) * A(0, j) + j_target(i, 1) * A(1, j);
        }
    }
    return r;
}

// Normalized cross product of the Jacobian columns.
Vec3d estimate_normal(const Mat<double, 3, 2>& J);

// 2D orthogonal Procrustes rotation (det +1) between centered preimage sets,
// applied about the domain center. Fewer than 2 pairs: identity with a
// warning on stderr.
Rotation2 landmark_rotation(std::span<const Vec2d> P, std::span<const Vec2d> Q);

// One surface-to-surface mapping problem: frozen source and target, a
// trainable 2D warp, keypoint preimages and the landmark rotation.
struct SurfaceMapHandle {
    Surface source;
    Surface target;
    net::NeuralMap warp; // 2 -> 2
    std::vector<Vec2d> P; // source keypoint preimages
    std::vector<Vec2d> Q; // target keypoint preimages
    Rotation2 rot;
    Domain domain = Domain::square;
};

// Adds the four domain corners as pinned keypoint pairs.
void pin_corners(SurfaceMapHandle& h);

// Warped domain position h(R p).
Vec2d warp_point(const net::NeuralMap& warp, const Rotation2& rot, const Vec2d& p);

struct PushedVertex {
    Vec3d position;
    bool out_of_domain = false; // warped preimage left the unit square
};

// Vertex-level correspondence export: target(h(R p)) per preimage.
std::vector<PushedVertex> push_mesh_through(const SurfaceMapHandle& h,
                                            std::span<const Vec2d> preimages);

// Cycle-consistent collection: k frozen surfaces, k trainable warps, shared
// keypoint targets in the domain. All pairwise maps route through the common
// domain, so cycles close exactly by construction.
struct CollectionHandle {
    std::vector<Surface> surfaces;
    std::vector<net::NeuralMap> warps;
    std::vector<std::vector<Vec2d>> keypoints; // preimages, per surface
    std::vector<Vec2d> targets;                // shared domain targets, one per keypoint
    std::vector<Rotation2> rots;
    Domain domain = Domain::square;
};

// Image of domain point p on surface i of the collection (through warp i).
Vec3d collection_point(const CollectionHandle& h, std::size_t i, const Vec2d& p);

// Route a domain point along a sequence of surfaces; by construction the
// result depends only on the final surface.
Vec3d route(const CollectionHandle& h, std::span<const std::size_t> path, const Vec2d& p);

} // namespace nsm::compose
