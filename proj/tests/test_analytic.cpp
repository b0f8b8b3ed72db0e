#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "nsm/analytic/surface.hpp"
#include "nsm/energy/energies.hpp"

using namespace nsm;
using analytic::AnalyticSurface;
using analytic::SurfaceKind;

namespace {

std::vector<AnalyticSurface> all_surfaces() {
    return {AnalyticSurface::plane(),
            AnalyticSurface::scaled_plane(2.5),
            AnalyticSurface::hemisphere(1.2),
            AnalyticSurface::cylinder_patch(0.8, 2.0, 1.5),
            AnalyticSurface::saddle(1.7),
            AnalyticSurface::torus_patch(2.0, 0.5, 1.8, 2.4)};
}

} // namespace

TEST_CASE("kind names round-trip") {
    for (const auto& s : all_surfaces()) {
        const std::string name = analytic::surface_kind_name(s.kind);
        CHECK(analytic::surface_kind_from_name(name) == s.kind);
    }
    CHECK_THROWS_AS((void)analytic::surface_kind_from_name("moebius"), ConfigError);
}

TEST_CASE("validate rejects non-positive parameters") {
    for (auto kind : {SurfaceKind::scaled_plane, SurfaceKind::hemisphere, SurfaceKind::saddle}) {
        AnalyticSurface s{kind, -1.0};
        CHECK_THROWS_AS(analytic::validate(s), ConfigError);
    }
    CHECK_THROWS_AS(analytic::validate(AnalyticSurface::cylinder_patch(1.0, 0.0)), ConfigError);
    CHECK_THROWS_AS(analytic::validate(AnalyticSurface::torus_patch(2.0, 0.5, 1.0, 7.0)),
                    ConfigError);
    for (const auto& s : all_surfaces()) CHECK_NOTHROW(analytic::validate(s));
}

TEST_CASE("analytic Jacobians match finite differences of eval") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(0.05, 0.95);
    const double h = 1e-6;
    for (const auto& s : all_surfaces()) {
        CAPTURE(analytic::surface_kind_name(s.kind));
        for (int t = 0; t < 50; ++t) {
            const double u = uni(rng), v = uni(rng);
            const auto j = analytic::eval_jacobian<double>(s, u, v);
            const auto fu1 = analytic::eval<double>(s, u + h, v);
            const auto fu0 = analytic::eval<double>(s, u - h, v);
            const auto fv1 = analytic::eval<double>(s, u, v + h);
            const auto fv0 = analytic::eval<double>(s, u, v - h);
            for (int r = 0; r < 3; ++r) {
                CHECK(j(r, 0) == doctest::Approx((fu1[r] - fu0[r]) / (2 * h)).epsilon(1e-5));
                CHECK(j(r, 1) == doctest::Approx((fv1[r] - fv0[r]) / (2 * h)).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("exact_metric equals J^T J") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (const auto& s : all_surfaces()) {
        CAPTURE(analytic::surface_kind_name(s.kind));
        for (int t = 0; t < 50; ++t) {
            const double u = uni(rng), v = uni(rng);
            const auto j = analytic::eval_jacobian<double>(s, u, v);
            const auto jtj = pullback_metric(j);
            const auto m = analytic::exact_metric(s, u, v);
            for (std::size_t i = 0; i < m.a.size(); ++i) {
                CHECK(m.a[i] == doctest::Approx(jtj.a[i]).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("eigenvalue-based densities agree with the trace-based energy module") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> uni(0.05, 0.95);
    const double eps = 0.01;
    for (const auto& s : all_surfaces()) {
        CAPTURE(analytic::surface_kind_name(s.kind));
        for (int t = 0; t < 50; ++t) {
            const double u = uni(rng), v = uni(rng);
            const auto m = analytic::exact_metric(s, u, v);
            CHECK(analytic::exact_dirichlet_density(s, u, v, eps) ==
                  doctest::Approx(energy::dirichlet_density(m, eps)).epsilon(1e-8));
            CHECK(analytic::exact_conformal_density(s, u, v) ==
                  doctest::Approx(energy::conformal_density(m)).epsilon(1e-8));
        }
    }
}

TEST_CASE("plane and scaled plane have closed-form densities") {
    const auto p = AnalyticSurface::plane();
    CHECK(analytic::exact_dirichlet_density(p, 0.3, 0.7, 0.01) ==
          doctest::Approx(2.0 + 2.0 / 1.01).epsilon(1e-12));
    CHECK(analytic::exact_conformal_density(p, 0.3, 0.7) == doctest::Approx(0.0));

    const auto sp = AnalyticSurface::scaled_plane(2.0);
    // metric 4 I: D_iso = 8 + 2 / 4.01
    CHECK(analytic::exact_dirichlet_density(sp, 0.5, 0.5, 0.01) ==
          doctest::Approx(8.0 + 2.0 / 4.01).epsilon(1e-12));
    CHECK(analytic::exact_conformal_density(sp, 0.2, 0.9) == doctest::Approx(0.0));
}

TEST_CASE("hemisphere geometry") {
    const double r = 1.0;
    const auto s = AnalyticSurface::hemisphere(r);

    // points land on the sphere of radius r
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const auto p = analytic::eval<double>(s, uni(rng), uni(rng));
        CHECK(std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) ==
              doctest::Approx(r).epsilon(1e-9));
        CHECK(p[2] > 0.0);
    }

    // at the pole the chart is a uniform scale: metric = (1.3 r)^2 I
    const auto m = analytic::exact_metric(s, 0.5, 0.5);
    CHECK(m(0, 0) == doctest::Approx(1.69 * r * r).epsilon(1e-12));
    CHECK(m(1, 1) == doctest::Approx(1.69 * r * r).epsilon(1e-12));
    CHECK(m(0, 1) == doctest::Approx(0.0));
    CHECK(analytic::exact_conformal_density(s, 0.5, 0.5) == doctest::Approx(0.0));

    // distortion increases toward the rim
    CHECK(analytic::exact_conformal_density(s, 0.95, 0.5) >
          analytic::exact_conformal_density(s, 0.7, 0.5));
}

TEST_CASE("cylinder patch is developable") {
    const auto s = AnalyticSurface::cylinder_patch(2.0, 1.5, 3.0);
    // metric diag((r*arc)^2, height^2) everywhere; conformal iff r*arc == height
    const auto m = analytic::exact_metric(s, 0.3, 0.8);
    CHECK(m(0, 0) == doctest::Approx(9.0).epsilon(1e-12));
    CHECK(m(1, 1) == doctest::Approx(9.0).epsilon(1e-12));
    CHECK(m(0, 1) == doctest::Approx(0.0));
    CHECK(analytic::exact_conformal_density(s, 0.3, 0.8) == doctest::Approx(0.0));
}

TEST_CASE("saddle metric at the center is the identity") {
    const auto s = AnalyticSurface::saddle(2.0);
    const auto m = analytic::exact_metric(s, 0.5, 0.5);
    CHECK(m(0, 0) == doctest::Approx(1.0));
    CHECK(m(1, 1) == doctest::Approx(1.0));
    CHECK(m(0, 1) == doctest::Approx(0.0));
    CHECK(analytic::exact_dirichlet_density(s, 0.5, 0.5, 0.01) ==
          doctest::Approx(2.0 + 2.0 / 1.01).epsilon(1e-12));
}

TEST_CASE("checked evaluation rejects points outside the unit square") {
    const auto s = AnalyticSurface::saddle(1.0);
    CHECK_NOTHROW((void)analytic::eval_checked(s, 0.0, 1.0));
    CHECK_THROWS_AS((void)analytic::eval_checked(s, 1.0001, 0.5), OutOfDomainError);
    CHECK_THROWS_AS((void)analytic::eval_checked(s, 0.5, -0.0001), OutOfDomainError);
    CHECK_THROWS_AS((void)analytic::eval_jacobian_checked(s, -0.1, 0.5), OutOfDomainError);

    const auto p = analytic::eval_checked(s, 0.25, 0.75);
    const auto q = analytic::eval<double>(s, 0.25, 0.75);
    CHECK(p == q);
}

TEST_CASE("eval supports forward-mode scalars") {
    const auto s = AnalyticSurface::hemisphere(1.0);
    const double u = 0.4, v = 0.65;
    const ad::Dual2<double> du(u, 1.0, 0.0), dv(v, 0.0, 1.0);
    const auto out = analytic::eval<ad::Dual2<double>>(s, du, dv);
    const auto j = analytic::eval_jacobian<double>(s, u, v);
    for (int r = 0; r < 3; ++r) {
        CHECK(out[r].du == doctest::Approx(j(r, 0)).epsilon(1e-12));
        CHECK(out[r].dv == doctest::Approx(j(r, 1)).epsilon(1e-12));
    }
}
