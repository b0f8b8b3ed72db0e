#pragma once

#include <array>
#include <string>
#include <vector>

#include "nsm/domain.hpp"
#include "nsm/errors.hpp"

namespace nsm::mesh {

// Disk-topology triangle mesh, rescaled on load to a unit-diagonal bounding
// box centered at the origin. Per-vertex normals are area-weighted averages
// of incident face normals unless the file provided them.
struct TriMesh {
    std::vector<Vec3d> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<Vec3d> normals;

    std::size_t num_vertices() const { return vertices.size(); }
    std::size_t num_faces() const { return faces.size(); }
};

// Parses v/vn/f records (faces fan-triangulated), then validates disk
// topology and normalizes. Throws FormatError on parse failures and
// TopologyError naming the violated requirement.
TriMesh load_obj(const std::string& path);

// Same pipeline for an in-memory mesh (used by tests and generators).
TriMesh finalize_mesh(std::vector<Vec3d> vertices, std::vector<std::array<int, 3>> faces,
                      std::vector<Vec3d> normals = {});

// Ordered boundary loop (following face orientation), starting at the
// boundary vertex with the lowest index.
std::vector<int> boundary_loop(const TriMesh& m);

double face_area(const TriMesh& m, int f);
Vec3d face_normal(const TriMesh& m, int f);

void write_obj(const std::string& path, const TriMesh& m,
               const std::vector<Vec2d>* uv = nullptr);

} // namespace nsm::mesh
