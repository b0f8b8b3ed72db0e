#include "nsm/mesh/trimesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

namespace nsm::mesh {

namespace {

Vec3d sub(const Vec3d& a, const Vec3d& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Vec3d cross(const Vec3d& a, const Vec3d& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3d& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

void normalize_bbox(TriMesh& m) {
    Vec3d lo = m.vertices.front(), hi = lo;
    for (const auto& v : m.vertices) {
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], v[k]);
            hi[k] = std::max(hi[k], v[k]);
        }
    }
    const Vec3d d = sub(hi, lo);
    const double diag = norm(d);
    if (diag <= 0.0) throw TopologyError("mesh collapses to a point");
    const double s = 1.0 / diag;
    const Vec3d c = {(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2};
    for (auto& v : m.vertices) {
        for (int k = 0; k < 3; ++k) v[k] = (v[k] - c[k]) * s;
    }
}

void compute_normals(TriMesh& m) {
    m.normals.assign(m.vertices.size(), {0.0, 0.0, 0.0});
    for (std::size_t f = 0; f < m.faces.size(); ++f) {
        const auto& t = m.faces[f];
        const Vec3d n = cross(sub(m.vertices[t[1]], m.vertices[t[0]]),
                              sub(m.vertices[t[2]], m.vertices[t[0]]));
        for (int k = 0; k < 3; ++k) {
            for (int j = 0; j < 3; ++j) m.normals[t[k]][j] += n[j]; // |n| = 2*area
        }
    }
    for (auto& n : m.normals) {
        const double l = norm(n);
        if (l > 1e-20) {
            for (auto& x : n) x /= l;
        }
    }
}

void validate_topology(const TriMesh& m) {
    const int nv = static_cast<int>(m.vertices.size());
    if (nv < 3 || m.faces.empty()) throw TopologyError("mesh has no triangles");

    std::map<std::pair<int, int>, int> directed;
    for (std::size_t f = 0; f < m.faces.size(); ++f) {
        const auto& t = m.faces[f];
        for (int k = 0; k < 3; ++k) {
            if (t[k] < 0 || t[k] >= nv) throw FormatError("face references missing vertex");
            if (t[k] == t[(k + 1) % 3]) throw TopologyError("degenerate face (repeated vertex)");
        }
        for (int k = 0; k < 3; ++k) {
            const auto e = std::make_pair(t[k], t[(k + 1) % 3]);
            if (++directed[e] > 1) {
                throw TopologyError("non-manifold or inconsistently oriented edge");
            }
        }
    }

    std::size_t num_edges = 0;
    std::map<int, int> boundary_next; // directed boundary edge a -> b
    for (const auto& [e, cnt] : directed) {
        if (e.first < e.second || !directed.count({e.second, e.first})) ++num_edges;
        if (!directed.count({e.second, e.first})) {
            if (boundary_next.count(e.first)) {
                throw TopologyError("non-manifold boundary vertex");
            }
            boundary_next[e.first] = e.second;
        }
    }
    if (boundary_next.empty()) throw TopologyError("no boundary loop (mesh is closed)");

    // Boundary edges must chain into exactly one loop.
    std::size_t visited = 0;
    int start = boundary_next.begin()->first;
    int cur = start;
    do {
        auto it = boundary_next.find(cur);
        if (it == boundary_next.end()) throw TopologyError("open boundary chain");
        cur = it->second;
        ++visited;
        if (visited > boundary_next.size()) throw TopologyError("boundary is not a simple loop");
    } while (cur != start);
    if (visited != boundary_next.size()) throw TopologyError("multiple boundary loops");

    // Single connected component via union-find over faces sharing vertices.
    std::vector<int> parent(m.vertices.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& t : m.faces) {
        parent[find(t[1])] = find(t[0]);
        parent[find(t[2])] = find(t[0]);
    }
    const int root = find(m.faces[0][0]);
    for (int v = 0; v < nv; ++v) {
        if (find(v) != root) throw TopologyError("multiple connected components");
    }

    // Euler characteristic of a disk: V - E + F = 1.
    const long euler = static_cast<long>(nv) - static_cast<long>(num_edges) +
                       static_cast<long>(m.faces.size());
    if (euler != 1) {
        throw TopologyError("mesh is not a topological disk (V-E+F = " + std::to_string(euler) + ")");
    }
}

void check_degenerate_faces(const TriMesh& m) {
    for (std::size_t f = 0; f < m.faces.size(); ++f) {
        if (face_area(m, static_cast<int>(f)) <= 1e-12) {
            throw TopologyError("degenerate face " + std::to_string(f) + " (area below 1e-12)");
        }
    }
}

void drop_unreferenced_vertices(std::vector<Vec3d>& vertices,
                                std::vector<std::array<int, 3>>& faces,
                                std::vector<Vec3d>& normals) {
    std::vector<int> remap(vertices.size(), -1);
    for (const auto& t : faces) {
        for (int k : t) {
            if (k < 0 || k >= static_cast<int>(vertices.size())) {
                throw FormatError("face references missing vertex");
            }
            remap[k] = 0;
        }
    }
    int next = 0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        if (remap[i] == 0) remap[i] = next++;
        else remap[i] = -1;
    }
    std::vector<Vec3d> nv(static_cast<std::size_t>(next));
    std::vector<Vec3d> nn(normals.empty() ? 0 : static_cast<std::size_t>(next));
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        if (remap[i] >= 0) {
            nv[remap[i]] = vertices[i];
            if (!normals.empty()) nn[remap[i]] = normals[i];
        }
    }
    for (auto& t : faces) {
        for (auto& k : t) k = remap[k];
    }
    vertices = std::move(nv);
    normals = std::move(nn);
}

} // namespace

double face_area(const TriMesh& m, int f) {
    const auto& t = m.faces[f];
    const Vec3d n = cross(sub(m.vertices[t[1]], m.vertices[t[0]]),
                          sub(m.vertices[t[2]], m.vertices[t[0]]));
    return 0.5 * norm(n);
}

Vec3d face_normal(const TriMesh& m, int f) {
    const auto& t = m.faces[f];
    Vec3d n = cross(sub(m.vertices[t[1]], m.vertices[t[0]]),
                    sub(m.vertices[t[2]], m.vertices[t[0]]));
    const double l = norm(n);
    if (l > 1e-20) {
        for (auto& x : n) x /= l;
    }
    return n;
}

TriMesh finalize_mesh(std::vector<Vec3d> vertices, std::vector<std::array<int, 3>> faces,
                      std::vector<Vec3d> normals) {
    drop_unreferenced_vertices(vertices, faces, normals);
    TriMesh m;
    m.vertices = std::move(vertices);
    m.faces = std::move(faces);
    m.normals = std::move(normals);
    validate_topology(m);
    normalize_bbox(m);
    check_degenerate_faces(m);
    if (m.normals.size() != m.vertices.size()) compute_normals(m);
    return m;
}

TriMesh load_obj(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IOError("cannot open OBJ file: " + path);

    std::vector<Vec3d> vertices;
    std::vector<Vec3d> file_normals;
    std::vector<int> vertex_normal_idx; // per vertex, from f v//vn records
    std::vector<std::array<int, 3>> faces;

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3d p;
            if (!(ss >> p[0] >> p[1] >> p[2])) {
                throw FormatError(path + ":" + std::to_string(lineno) + ": malformed vertex");
            }
            vertices.push_back(p);
            vertex_normal_idx.push_back(-1);
        } else if (tag == "vn") {
            Vec3d n;
            if (!(ss >> n[0] >> n[1] >> n[2])) {
                throw FormatError(path + ":" + std::to_string(lineno) + ": malformed normal");
            }
            file_normals.push_back(n);
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string tok;
            while (ss >> tok) {
                // forms: v, v/vt, v//vn, v/vt/vn
                int vi = 0, ni = -1;
                const auto s1 = tok.find('/');
                try {
                    vi = std::stoi(tok.substr(0, s1));
                    if (s1 != std::string::npos) {
                        const auto s2 = tok.find('/', s1 + 1);
                        if (s2 != std::string::npos && s2 + 1 < tok.size()) {
                            ni = std::stoi(tok.substr(s2 + 1));
                        }
                    }
                } catch (const std::exception&) {
                    throw FormatError(path + ":" + std::to_string(lineno) + ": malformed face token '" + tok + "'");
                }
                if (vi < 0) vi = static_cast<int>(vertices.size()) + vi + 1;
                if (vi < 1 || vi > static_cast<int>(vertices.size())) {
                    throw FormatError(path + ":" + std::to_string(lineno) + ": face references missing vertex");
                }
                if (ni > 0 && ni <= static_cast<int>(file_normals.size())) {
                    vertex_normal_idx[vi - 1] = ni - 1;
                }
                poly.push_back(vi - 1);
            }
            if (poly.size() < 3) {
                throw FormatError(path + ":" + std::to_string(lineno) + ": face with fewer than 3 vertices");
            }
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                faces.push_back({poly[0], poly[k], poly[k + 1]});
            }
        }
        // vt and other records are ignored on input
    }
    if (vertices.empty()) throw FormatError(path + ": no vertices");

    std::vector<Vec3d> normals;
    if (!file_normals.empty() &&
        std::none_of(vertex_normal_idx.begin(), vertex_normal_idx.end(), [](int i) { return i < 0; })) {
        normals.reserve(vertices.size());
        for (int i : vertex_normal_idx) {
            Vec3d n = file_normals[i];
            const double l = norm(n);
            if (l > 1e-20) {
                for (auto& x : n) x /= l;
            }
            normals.push_back(n);
        }
    }
    return finalize_mesh(std::move(vertices), std::move(faces), std::move(normals));
}

std::vector<int> boundary_loop(const TriMesh& m) {
    std::map<std::pair<int, int>, bool> directed;
    for (const auto& t : m.faces) {
        for (int k = 0; k < 3; ++k) directed[{t[k], t[(k + 1) % 3]}] = true;
    }
    std::map<int, int> next;
    for (const auto& [e, _] : directed) {
        if (!directed.count({e.second, e.first})) next[e.first] = e.second;
    }
    if (next.empty()) throw TopologyError("no boundary loop");
    const int start = next.begin()->first; // lowest boundary vertex index (map is ordered)
    std::vector<int> loop;
    int cur = start;
    do {
        loop.push_back(cur);
        cur = next.at(cur);
    } while (cur != start);
    return loop;
}

void write_obj(const std::string& path, const TriMesh& m, const std::vector<Vec2d>* uv) {
    std::ofstream f(path);
    if (!f) throw IOError("cannot open OBJ for writing: " + path);
    f.precision(17);
    for (const auto& v : m.vertices) f << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    for (const auto& n : m.normals) f << "vn " << n[0] << ' ' << n[1] << ' ' << n[2] << '\n';
    if (uv) {
        for (const auto& t : *uv) f << "vt " << t[0] << ' ' << t[1] << '\n';
    }
    for (const auto& t : m.faces) {
        f << "f";
        for (int k = 0; k < 3; ++k) {
            const int i = t[k] + 1;
            if (uv) {
                f << ' ' << i << '/' << i << '/' << i;
            } else {
                f << ' ' << i << "//" << i;
            }
        }
        f << '\n';
    }
    if (!f) throw IOError("failed writing OBJ: " + path);
}

} // namespace nsm::mesh
