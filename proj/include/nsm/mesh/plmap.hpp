#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nsm/domain.hpp"
#include "nsm/mesh/trimesh.hpp"

namespace nsm::mesh {

// A 2D point in the domain with its ground-truth surface data.
struct DomainSample {
    Vec2d p;
    Vec3d position;
    Vec3d normal;
    int face = -1;
    Vec3d bary;
};

// Triangle mesh paired with a bijective UV embedding of it into the canonical
// domain; realizes the piecewise-linear ground-truth map f and its sampling.
class PLMap {
public:
    PLMap(TriMesh mesh, std::vector<Vec2d> uv, Domain domain);

    const TriMesh& mesh() const { return mesh_; }
    const std::vector<Vec2d>& uv() const { return uv_; }
    Domain domain() const { return domain_; }

    // Containing UV triangle and barycentric coordinates. Throws
    // OutOfDomainError (with a nearest-triangle hint) if p is outside the
    // embedded image.
    std::pair<int, Vec3d> locate(const Vec2d& p) const;

    // Barycentric interpolation of position and (renormalized) normal.
    std::pair<Vec3d, Vec3d> evaluate(const Vec2d& p) const;

    // `count` samples uniform over the surface area, carried into the domain
    // through the embedding. Reproducible for equal seeds.
    std::vector<DomainSample> sample(std::size_t count, std::uint64_t seed) const;

    // UV preimage of a mesh vertex.
    Vec2d keypoint_preimage(int vertex) const;
    // UV preimage of a 3D point within `tol` of the surface; throws
    // ProjectionError otherwise.
    Vec2d keypoint_preimage(const Vec3d& point, double tol = 1e-3) const;

    double uv_signed_area(int face) const;

private:
    TriMesh mesh_;
    std::vector<Vec2d> uv_;
    Domain domain_;

    // uniform grid over the UV bounding box
    int grid_n_ = 1;
    Vec2d grid_lo_{}, grid_size_{};
    std::vector<std::vector<int>> cells_;

    std::vector<double> area_cdf_; // cumulative 3D face areas for sampling

    void build_index();
    std::optional<std::pair<int, Vec3d>> try_face(int f, const Vec2d& p, double tol) const;
    DomainSample sample_at(int face, const Vec3d& bary) const;
};

// Convex-combination (uniform-weight) embedding of a disk mesh with the
// boundary loop placed on the domain boundary by 3D arc-length proportion.
PLMap tutte_embed(const TriMesh& mesh, Domain domain = Domain::square);

} // namespace nsm::mesh
