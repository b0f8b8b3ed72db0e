#include "nsm/mesh/plmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace nsm::mesh {

namespace {

double tri_signed_area(const Vec2d& a, const Vec2d& b, const Vec2d& c) {
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]));
}

double dist3(const Vec3d& a, const Vec3d& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

} // namespace

PLMap::PLMap(TriMesh mesh, std::vector<Vec2d> uv, Domain domain)
    : mesh_(std::move(mesh)), uv_(std::move(uv)), domain_(domain) {
    if (uv_.size() != mesh_.vertices.size()) {
        throw ConfigError("PLMap: uv count does not match vertex count");
    }
    for (std::size_t f = 0; f < mesh_.faces.size(); ++f) {
        if (uv_signed_area(static_cast<int>(f)) <= 0.0) {
            throw NumericalError("PLMap: flipped UV triangle " + std::to_string(f));
        }
    }
    build_index();

    area_cdf_.resize(mesh_.faces.size());
    double acc = 0.0;
    for (std::size_t f = 0; f < mesh_.faces.size(); ++f) {
        acc += face_area(mesh_, static_cast<int>(f));
        area_cdf_[f] = acc;
    }
}

double PLMap::uv_signed_area(int face) const {
    const auto& t = mesh_.faces[face];
    return tri_signed_area(uv_[t[0]], uv_[t[1]], uv_[t[2]]);
}

void PLMap::build_index() {
    grid_n_ = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(mesh_.faces.size())))));
    Vec2d lo = uv_[0], hi = uv_[0];
    for (const auto& p : uv_) {
        lo[0] = std::min(lo[0], p[0]);
        lo[1] = std::min(lo[1], p[1]);
        hi[0] = std::max(hi[0], p[0]);
        hi[1] = std::max(hi[1], p[1]);
    }
    grid_lo_ = lo;
    grid_size_ = {std::max(hi[0] - lo[0], 1e-12), std::max(hi[1] - lo[1], 1e-12)};
    cells_.assign(static_cast<std::size_t>(grid_n_) * grid_n_, {});

    auto cell_of = [&](double x, double y, int& cx, int& cy) {
        cx = std::clamp(static_cast<int>((x - grid_lo_[0]) / grid_size_[0] * grid_n_), 0, grid_n_ - 1);
        cy = std::clamp(static_cast<int>((y - grid_lo_[1]) / grid_size_[1] * grid_n_), 0, grid_n_ - 1);
    };
    for (std::size_t f = 0; f < mesh_.faces.size(); ++f) {
        const auto& t = mesh_.faces[f];
        double bx0 = uv_[t[0]][0], bx1 = bx0, by0 = uv_[t[0]][1], by1 = by0;
        for (int k = 1; k < 3; ++k) {
            bx0 = std::min(bx0, uv_[t[k]][0]);
            bx1 = std::max(bx1, uv_[t[k]][0]);
            by0 = std::min(by0, uv_[t[k]][1]);
            by1 = std::max(by1, uv_[t[k]][1]);
        }
        int cx0, cy0, cx1, cy1;
        cell_of(bx0, by0, cx0, cy0);
        cell_of(bx1, by1, cx1, cy1);
        for (int cy = cy0; cy <= cy1; ++cy) {
            for (int cx = cx0; cx <= cx1; ++cx) {
                cells_[static_cast<std::size_t>(cy) * grid_n_ + cx].push_back(static_cast<int>(f));
            }
        }
    }
}

std::optional<std::pair<int, Vec3d>> PLMap::try_face(int f, const Vec2d& p, double tol) const {
    const auto& t = mesh_.faces[f];
    const Vec2d &a = uv_[t[0]], &b = uv_[t[1]], &c = uv_[t[2]];
    const double area = tri_signed_area(a, b, c);
    const double b0 = tri_signed_area(p, b, c) / area;
    const double b1 = tri_signed_area(a, p, c) / area;
    const double b2 = tri_signed_area(a, b, p) / area;
    if (b0 >= -tol && b1 >= -tol && b2 >= -tol) {
        // clamp and renormalize so coordinates are nonnegative and sum to 1
        Vec3d bc = {std::max(b0, 0.0), std::max(b1, 0.0), std::max(b2, 0.0)};
        const double s = bc[0] + bc[1] + bc[2];
        for (auto& x : bc) x /= s;
        return std::make_pair(f, bc);
    }
    return std::nullopt;
}

std::pair<int, Vec3d> PLMap::locate(const Vec2d& p) const {
    constexpr double tol = 1e-9;
    if (std::isfinite(p[0]) && std::isfinite(p[1])) {
        const int cx = std::clamp(static_cast<int>((p[0] - grid_lo_[0]) / grid_size_[0] * grid_n_), 0, grid_n_ - 1);
        const int cy = std::clamp(static_cast<int>((p[1] - grid_lo_[1]) / grid_size_[1] * grid_n_), 0, grid_n_ - 1);
        for (int f : cells_[static_cast<std::size_t>(cy) * grid_n_ + cx]) {
            if (auto r = try_face(f, p, tol)) return *r;
        }
        // grid miss near cell borders: fall back to a full scan
        for (std::size_t f = 0; f < mesh_.faces.size(); ++f) {
            if (auto r = try_face(static_cast<int>(f), p, tol)) return *r;
        }
    }
    // outside: report the nearest triangle as a hint
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < mesh_.faces.size(); ++f) {
        const auto& t = mesh_.faces[f];
        for (int k = 0; k < 3; ++k) {
            const double dx = p[0] - uv_[t[k]][0], dy = p[1] - uv_[t[k]][1];
            const double d = dx * dx + dy * dy;
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(f);
            }
        }
    }
    throw OutOfDomainError("point (" + std::to_string(p[0]) + ", " + std::to_string(p[1]) +
                           ") is outside the embedded domain; nearest triangle " +
                           std::to_string(best) + " at distance " + std::to_string(std::sqrt(best_d)));
}

DomainSample PLMap::sample_at(int face, const Vec3d& bary) const {
    const auto& t = mesh_.faces[face];
    DomainSample s;
    s.face = face;
    s.bary = bary;
    for (int k = 0; k < 2; ++k) {
        s.p[k] = bary[0] * uv_[t[0]][k] + bary[1] * uv_[t[1]][k] + bary[2] * uv_[t[2]][k];
    }
    double nn = 0.0;
    for (int k = 0; k < 3; ++k) {
        s.position[k] = bary[0] * mesh_.vertices[t[0]][k] + bary[1] * mesh_.vertices[t[1]][k] +
                        bary[2] * mesh_.vertices[t[2]][k];
        s.normal[k] = bary[0] * mesh_.normals[t[0]][k] + bary[1] * mesh_.normals[t[1]][k] +
                      bary[2] * mesh_.normals[t[2]][k];
        nn += s.normal[k] * s.normal[k];
    }
    nn = std::sqrt(nn);
    if (nn > 1e-20) {
        for (auto& x : s.normal) x /= nn;
    }
    return s;
}

std::pair<Vec3d, Vec3d> PLMap::evaluate(const Vec2d& p) const {
    const auto [face, bary] = locate(p);
    const DomainSample s = sample_at(face, bary);
    return {s.position, s.normal};
}

std::vector<DomainSample> PLMap::sample(std::size_t count, std::uint64_t seed) const {
    if (count < 1) throw ConfigError("sample: count must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double total = area_cdf_.back();
    std::vector<DomainSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double r = uni(rng) * total;
        const auto it = std::lower_bound(area_cdf_.begin(), area_cdf_.end(), r);
        const int face = static_cast<int>(std::min<std::size_t>(
            static_cast<std::size_t>(it - area_cdf_.begin()), area_cdf_.size() - 1));
        const double su = std::sqrt(uni(rng));
        const double v = uni(rng);
        out.push_back(sample_at(face, {1.0 - su, su * (1.0 - v), su * v}));
    }
    return out;
}

Vec2d PLMap::keypoint_preimage(int vertex) const {
    if (vertex < 0 || vertex >= static_cast<int>(mesh_.vertices.size())) {
        throw ConfigError("keypoint_preimage: vertex index out of range");
    }
    return uv_[vertex];
}

Vec2d PLMap::keypoint_preimage(const Vec3d& point, double tol) const {
    double best_d2 = std::numeric_limits<double>::infinity();
    Vec3d best_bary{};
    int best_face = -1;
    for (std::size_t f = 0; f < mesh_.faces.size(); ++f) {
        const auto& t = mesh_.faces[f];
        // closest point on triangle (Ericson's method)
        const Vec3d& a = mesh_.vertices[t[0]];
        const Vec3d& b = mesh_.vertices[t[1]];
        const Vec3d& c = mesh_.vertices[t[2]];
        auto sub = [](const Vec3d& x, const Vec3d& y) {
            return Vec3d{x[0] - y[0], x[1] - y[1], x[2] - y[2]};
        };
        auto dot = [](const Vec3d& x, const Vec3d& y) {
            return x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
        };
        const Vec3d ab = sub(b, a), ac = sub(c, a), ap = sub(point, a);
        const double d1 = dot(ab, ap), d2 = dot(ac, ap);
        Vec3d bary;
        if (d1 <= 0.0 && d2 <= 0.0) {
            bary = {1.0, 0.0, 0.0};
        } else {
            const Vec3d bp = sub(point, b);
            const double d3 = dot(ab, bp), d4 = dot(ac, bp);
            const Vec3d cp = sub(point, c);
            const double d5 = dot(ab, cp), d6 = dot(ac, cp);
            const double vc = d1 * d4 - d3 * d2;
            const double vb = d5 * d2 - d1 * d6;
            const double va = d3 * d6 - d5 * d4;
            if (d3 >= 0.0 && d4 <= d3) {
                bary = {0.0, 1.0, 0.0};
            } else if (d6 >= 0.0 && d5 <= d6) {
                bary = {0.0, 0.0, 1.0};
            } else if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
                const double w = d1 / (d1 - d3);
                bary = {1.0 - w, w, 0.0};
            } else if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
                const double w = d2 / (d2 - d6);
                bary = {1.0 - w, 0.0, w};
            } else if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
                const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
                bary = {0.0, 1.0 - w, w};
            } else {
                const double denom = 1.0 / (va + vb + vc);
                bary = {va * denom, vb * denom, vc * denom};
            }
        }
        Vec3d q{};
        for (int k = 0; k < 3; ++k) {
            q[k] = bary[0] * a[k] + bary[1] * b[k] + bary[2] * c[k];
        }
        const double d = dist3(q, point);
        if (d * d < best_d2) {
            best_d2 = d * d;
            best_bary = bary;
            best_face = static_cast<int>(f);
        }
    }
    if (std::sqrt(best_d2) > tol) {
        throw ProjectionError("keypoint is " + std::to_string(std::sqrt(best_d2)) +
                              " away from the surface (tolerance " + std::to_string(tol) + ")");
    }
    const auto& t = mesh_.faces[best_face];
    Vec2d p{};
    for (int k = 0; k < 2; ++k) {
        p[k] = best_bary[0] * uv_[t[0]][k] + best_bary[1] * uv_[t[1]][k] + best_bary[2] * uv_[t[2]][k];
    }
    return p;
}

PLMap tutte_embed(const TriMesh& mesh, Domain domain) {
    const std::vector<int> loop = boundary_loop(mesh);
    const int nv = static_cast<int>(mesh.vertices.size());

    // boundary placement by 3D arc length
    std::vector<double> seglen(loop.size());
    double perimeter = 0.0;
    for (std::size_t i = 0; i < loop.size(); ++i) {
        seglen[i] = dist3(mesh.vertices[loop[i]], mesh.vertices[loop[(i + 1) % loop.size()]]);
        perimeter += seglen[i];
    }
    std::vector<Vec2d> uv(static_cast<std::size_t>(nv), {0.0, 0.0});
    std::vector<char> on_boundary(static_cast<std::size_t>(nv), 0);
    double acc = 0.0;
    for (std::size_t i = 0; i < loop.size(); ++i) {
        uv[loop[i]] = boundary_point(domain, acc / perimeter);
        on_boundary[loop[i]] = 1;
        acc += seglen[i];
    }

    // interior: uniform-weight convex combinations (edge weight 1, symmetric)
    std::vector<int> interior_id(static_cast<std::size_t>(nv), -1);
    std::vector<int> interior;
    for (int v = 0; v < nv; ++v) {
        if (!on_boundary[v]) {
            interior_id[v] = static_cast<int>(interior.size());
            interior.push_back(v);
        }
    }
    if (!interior.empty()) {
        std::set<std::pair<int, int>> edges;
        for (const auto& t : mesh.faces) {
            for (int k = 0; k < 3; ++k) {
                const int a = t[k], b = t[(k + 1) % 3];
                edges.insert({std::min(a, b), std::max(a, b)});
            }
        }
        const int n = static_cast<int>(interior.size());
        Eigen::SparseMatrix<double> L(n, n);
        std::vector<Eigen::Triplet<double>> trip;
        Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(n, 2);
        std::vector<double> diag(static_cast<std::size_t>(n), 0.0);
        for (const auto& [a, b] : edges) {
            const int ia = interior_id[a], ib = interior_id[b];
            if (ia >= 0) diag[ia] += 1.0;
            if (ib >= 0) diag[ib] += 1.0;
            if (ia >= 0 && ib >= 0) {
                trip.emplace_back(ia, ib, -1.0);
                trip.emplace_back(ib, ia, -1.0);
            } else if (ia >= 0) {
                rhs(ia, 0) += uv[b][0];
                rhs(ia, 1) += uv[b][1];
            } else if (ib >= 0) {
                rhs(ib, 0) += uv[a][0];
                rhs(ib, 1) += uv[a][1];
            }
        }
        for (int i = 0; i < n; ++i) trip.emplace_back(i, i, diag[i]);
        L.setFromTriplets(trip.begin(), trip.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(L);
        if (solver.info() != Eigen::Success) {
            throw NumericalError("tutte_embed: factorization of the convex-combination system failed");
        }
        const Eigen::MatrixX2d x = solver.solve(rhs);
        if (solver.info() != Eigen::Success) {
            throw NumericalError("tutte_embed: solve failed");
        }
        for (int i = 0; i < n; ++i) uv[interior[i]] = {x(i, 0), x(i, 1)};
    }

    // orient positively
    double total = 0.0;
    for (const auto& t : mesh.faces) {
        total += tri_signed_area(uv[t[0]], uv[t[1]], uv[t[2]]);
    }
    if (total < 0.0) {
        for (auto& p : uv) p[1] = 1.0 - p[1];
    }
    return PLMap(mesh, std::move(uv), domain);
}

} // namespace nsm::mesh
