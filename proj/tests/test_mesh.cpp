#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "nsm/mesh/plmap.hpp"
#include "nsm/mesh/trimesh.hpp"

using namespace nsm;
using mesh::TriMesh;

#ifndef NSM_DATA_DIR
#define NSM_DATA_DIR "data"
#endif

namespace {

std::string data(const char* name) { return std::string(NSM_DATA_DIR) + "/" + name; }

std::string write_temp_obj(const char* name, const std::string& content) {
    const std::string path = std::string("/tmp/nsm_mesh_") + name;
    std::ofstream(path) << content;
    return path;
}

TriMesh quad_mesh() {
    return mesh::finalize_mesh({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}},
                               {{0, 1, 2}, {0, 2, 3}});
}

} // namespace

TEST_CASE("obj loader parses vertices, normals and faces") {
    const auto path = write_temp_obj("basic.obj", R"(# comment
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
vn 0 0 1
f 1//1 2//1 3//1
f 1 3 4
)");
    const auto m = mesh::load_obj(path);
    CHECK(m.num_vertices() == 4);
    CHECK(m.num_faces() == 2);
    CHECK(m.normals.size() == 4);
    std::remove(path.c_str());
}

TEST_CASE("quad faces are fan-triangulated") {
    const auto path = write_temp_obj("fan.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
    const auto m = mesh::load_obj(path);
    CHECK(m.num_faces() == 2);
    std::remove(path.c_str());
}

TEST_CASE("negative obj indices are relative to the current vertex count") {
    const auto path = write_temp_obj("neg.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n");
    const auto m = mesh::load_obj(path);
    CHECK(m.num_faces() == 1);
    CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});
    std::remove(path.c_str());
}

TEST_CASE("format and I/O errors") {
    CHECK_THROWS_AS((void)mesh::load_obj("/nonexistent.obj"), IOError);
    const auto bad = write_temp_obj("bad.obj", "v 1 2\nf 1 2 3\n");
    CHECK_THROWS_AS((void)mesh::load_obj(bad), FormatError);
    const auto missing = write_temp_obj("missing.obj", "v 0 0 0\nv 1 0 0\nf 1 2 9\n");
    CHECK_THROWS_AS((void)mesh::load_obj(missing), FormatError);
    std::remove(bad.c_str());
    std::remove(missing.c_str());
}

TEST_CASE("topology validation") {
    SUBCASE("closed mesh has no boundary") {
        try {
            (void)mesh::load_obj(data("tetra.obj"));
            FAIL("expected TopologyError");
        } catch (const TopologyError& e) {
            CHECK(std::string(e.what()).find("no boundary loop") != std::string::npos);
        }
    }
    SUBCASE("non-manifold edge") {
        CHECK_THROWS_AS((void)mesh::finalize_mesh(
                            {{0, 0, 0}, {1, 0, 0}, {0.5, 1, 0}, {0.5, -1, 0}, {0.5, 0.5, 1}},
                            {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}}),
                        TopologyError);
    }
    SUBCASE("inconsistent orientation") {
        CHECK_THROWS_AS((void)mesh::finalize_mesh({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}},
                                                  {{0, 1, 2}, {0, 3, 2}}),
                        TopologyError);
    }
    SUBCASE("two components") {
        CHECK_THROWS_AS((void)mesh::finalize_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0},
                                                   {5, 0, 0}, {6, 0, 0}, {5, 1, 0}},
                                                  {{0, 1, 2}, {3, 4, 5}}),
                        TopologyError);
    }
    SUBCASE("repeated vertex in a face") {
        CHECK_THROWS_AS((void)mesh::finalize_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}},
                                                  {{0, 1, 1}}),
                        TopologyError);
    }
}

TEST_CASE("meshes are normalized to a unit-diagonal centered bounding box") {
    const auto m = mesh::load_obj(data("hemisphere.obj"));
    Vec3d lo = m.vertices[0], hi = m.vertices[0];
    for (const auto& v : m.vertices) {
        for (int d = 0; d < 3; ++d) {
            lo[d] = std::min(lo[d], v[d]);
            hi[d] = std::max(hi[d], v[d]);
        }
    }
    double diag = 0.0;
    for (int d = 0; d < 3; ++d) {
        diag += (hi[d] - lo[d]) * (hi[d] - lo[d]);
        CHECK(std::fabs(hi[d] + lo[d]) < 1e-12); // centered
    }
    CHECK(std::sqrt(diag) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("boundary loop of the quad starts at the lowest boundary vertex") {
    const auto loop = mesh::boundary_loop(quad_mesh());
    REQUIRE(loop.size() == 4);
    CHECK(loop[0] == 0);
    // follows face orientation: 0 -> 1 -> 2 -> 3
    CHECK(loop[1] == 1);
    CHECK(loop[2] == 2);
    CHECK(loop[3] == 3);
}

TEST_CASE("vertex normals are area-weighted and unit length") {
    const auto m = quad_mesh();
    REQUIRE(m.normals.size() == 4);
    for (const auto& n : m.normals) {
        CHECK(std::fabs(n[0]) < 1e-12);
        CHECK(std::fabs(n[1]) < 1e-12);
        CHECK(n[2] == doctest::Approx(1.0));
    }
}

TEST_CASE("tutte embedding of the bundled meshes is flip-free with boundary on the square") {
    for (const char* name : {"quad.obj", "triangle.obj", "hemisphere.obj", "saddle.obj",
                             "icosphere_cut.obj"}) {
        CAPTURE(name);
        const auto m = mesh::load_obj(data(name));
        const auto pl = mesh::tutte_embed(m);
        for (int f = 0; f < static_cast<int>(m.num_faces()); ++f) {
            CHECK(pl.uv_signed_area(f) > 0.0);
        }
        const auto loop = mesh::boundary_loop(m);
        for (int v : loop) {
            const auto& p = pl.uv()[static_cast<std::size_t>(v)];
            CHECK(std::fabs(square_signed_distance(p[0], p[1])) <= 1e-9);
        }
    }
}

TEST_CASE("tutte interior vertices satisfy the convex-combination equations") {
    const auto m = mesh::load_obj(data("hemisphere.obj"));
    const auto pl = mesh::tutte_embed(m);
    const auto loop = mesh::boundary_loop(m);
    const std::set<int> boundary(loop.begin(), loop.end());

    std::map<int, std::set<int>> nbrs;
    for (const auto& f : m.faces) {
        for (int k = 0; k < 3; ++k) {
            nbrs[f[k]].insert(f[(k + 1) % 3]);
            nbrs[f[k]].insert(f[(k + 2) % 3]);
        }
    }
    for (const auto& [v, ns] : nbrs) {
        if (boundary.count(v)) continue;
        Vec2d mean = {0, 0};
        for (int n : ns) {
            mean[0] += pl.uv()[static_cast<std::size_t>(n)][0];
            mean[1] += pl.uv()[static_cast<std::size_t>(n)][1];
        }
        mean[0] /= static_cast<double>(ns.size());
        mean[1] /= static_cast<double>(ns.size());
        CHECK(pl.uv()[static_cast<std::size_t>(v)][0] == doctest::Approx(mean[0]).epsilon(1e-9));
        CHECK(pl.uv()[static_cast<std::size_t>(v)][1] == doctest::Approx(mean[1]).epsilon(1e-9));
    }
}

TEST_CASE("boundary placement is proportional to 3D arc length") {
    // a stretched quad: one boundary edge is three times longer in 3D
    const auto m = mesh::finalize_mesh({{0, 0, 0}, {3, 0, 0}, {3, 1, 0}, {0, 1, 0}},
                                       {{0, 1, 2}, {0, 2, 3}});
    const auto pl = mesh::tutte_embed(m);
    const auto& uv = pl.uv();
    // perimeter 8, scaled; vertex 0 at t=0, vertex 1 at t=3/8 of the perimeter
    const auto p1 = boundary_point(Domain::square, 3.0 / 8.0);
    CHECK(uv[1][0] == doctest::Approx(p1[0]).epsilon(1e-9));
    CHECK(uv[1][1] == doctest::Approx(p1[1]).epsilon(1e-9));
}

TEST_CASE("plmap locate and evaluate") {
    const auto m = quad_mesh();
    const auto pl = mesh::tutte_embed(m);

    const auto [face, bary] = pl.locate({0.25, 0.25});
    CHECK(face >= 0);
    CHECK(bary[0] + bary[1] + bary[2] == doctest::Approx(1.0));

    const auto [pos, nrm] = pl.evaluate({0.5, 0.5});
    CHECK(std::fabs(nrm[2]) == doctest::Approx(1.0));
    CHECK(std::isfinite(pos[0]));

    CHECK_THROWS_AS((void)pl.locate({1.5, 0.5}), OutOfDomainError);
    CHECK_THROWS_AS((void)pl.locate({-0.2, -0.2}), OutOfDomainError);
}

TEST_CASE("plmap rejects a flipped embedding") {
    const auto m = quad_mesh();
    std::vector<Vec2d> uv = {{0, 0}, {0, 1}, {1, 1}, {1, 0}}; // reversed orientation
    CHECK_THROWS_AS(mesh::PLMap(m, uv, Domain::square), NumericalError);
}

TEST_CASE("surface sampling is seeded and area-weighted") {
    const auto m = quad_mesh();
    const auto pl = mesh::tutte_embed(m);
    const auto s1 = pl.sample(500, 9);
    const auto s2 = pl.sample(500, 9);
    const auto s3 = pl.sample(500, 10);
    REQUIRE(s1.size() == 500);
    bool same = true, differ = false;
    for (std::size_t i = 0; i < 500; ++i) {
        same = same && s1[i].p == s2[i].p;
        differ = differ || s1[i].p != s3[i].p;
    }
    CHECK(same);
    CHECK(differ);
    for (const auto& s : s1) {
        CHECK(s.face >= 0);
        const auto [pos, nrm] = pl.evaluate(s.p);
        CHECK(pos[0] == doctest::Approx(s.position[0]).epsilon(1e-9));
        CHECK(pos[2] == doctest::Approx(s.position[2]).epsilon(1e-9));
    }
}

TEST_CASE("sampling weights faces by 3D area, not UV area") {
    // the two triangles of this quad have 3D areas 0.5 and 1.5
    const auto skew = mesh::finalize_mesh({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 3, 0}},
                                          {{0, 1, 2}, {0, 2, 3}});
    const auto spl = mesh::tutte_embed(skew);
    const double a0 = mesh::face_area(skew, 0);
    const double a1 = mesh::face_area(skew, 1);
    const auto samples = spl.sample(20000, 3);
    std::size_t hits0 = 0;
    for (const auto& s : samples) {
        if (s.face == 0) ++hits0;
    }
    const double expected = a0 / (a0 + a1);
    CHECK(static_cast<double>(hits0) / 20000.0 == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("keypoint preimages") {
    const auto m = quad_mesh();
    const auto pl = mesh::tutte_embed(m);
    const auto p = pl.keypoint_preimage(2);
    CHECK(p == pl.uv()[2]);
    CHECK_THROWS_AS((void)pl.keypoint_preimage(99), ConfigError);

    // 3D point at the (normalized) mesh center
    const auto q = pl.keypoint_preimage(Vec3d{0, 0, 0});
    const auto [pos, nrm] = pl.evaluate(q);
    CHECK(std::fabs(pos[0]) < 1e-9);
    CHECK(std::fabs(pos[1]) < 1e-9);
    (void)nrm;
    CHECK_THROWS_AS((void)pl.keypoint_preimage(Vec3d{5, 5, 5}), ProjectionError);
}

TEST_CASE("write_obj emits uv records and round-trips") {
    const auto m = quad_mesh();
    const auto pl = mesh::tutte_embed(m);
    const std::string path = "/tmp/nsm_mesh_roundtrip.obj";
    mesh::write_obj(path, pl.mesh(), &pl.uv());

    std::ifstream f(path);
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(content.find("vt ") != std::string::npos);

    const auto r = mesh::load_obj(path);
    CHECK(r.num_vertices() == m.num_vertices());
    CHECK(r.num_faces() == m.num_faces());
    std::remove(path.c_str());
}
