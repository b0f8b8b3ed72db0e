#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "nsm/ad/dual2.hpp"
#include "nsm/ad/tape.hpp"

using namespace nsm;
using ad::Dual2;
using ad::Tape;
using ad::Var;

namespace {

// central finite difference of f at x[i]
template <class F>
double fd(F&& f, std::vector<double> x, std::size_t i, double h = 1e-6) {
    x[i] += h;
    const double up = f(x);
    x[i] -= 2 * h;
    const double dn = f(x);
    return (up - dn) / (2 * h);
}

template <class F, class G>
void check_gradient(F&& taped, G&& plain, const std::vector<double>& x, double tol = 1e-6) {
    Tape tape;
    std::vector<Var> v;
    for (double xi : x) v.push_back(ad::make_param(tape, xi));
    const Var y = taped(v);
    CHECK(y.v == doctest::Approx(plain(x)).epsilon(1e-12));
    const auto g = ad::gradient(y);
    REQUIRE(g.size() == x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(g[i] == doctest::Approx(fd(plain, x, i)).epsilon(tol));
    }
}

} // namespace

TEST_CASE("reverse mode matches finite differences on a composite expression") {
    auto taped = [](const std::vector<Var>& v) {
        using namespace nsm::ad;
        return exp(v[0] * v[1]) + sqrt(v[2]) / (v[0] + Var(3.0)) - log(v[2]) * sin(v[1]) +
               cos(v[0]) * softplus(v[1]) + sigmoid(v[2] - v[0]);
    };
    auto plain = [](const std::vector<double>& v) {
        return std::exp(v[0] * v[1]) + std::sqrt(v[2]) / (v[0] + 3.0) -
               std::log(v[2]) * std::sin(v[1]) + std::cos(v[0]) * ad::softplus(v[1]) +
               ad::sigmoid(v[2] - v[0]);
    };
    check_gradient(taped, plain, {0.7, -0.3, 2.1});
    check_gradient(taped, plain, {-1.2, 0.9, 0.4});
}

TEST_CASE("min max abs and clamp-like primitives") {
    auto taped = [](const std::vector<Var>& v) {
        using namespace nsm::ad;
        return max(v[0], v[1]) * min(v[0] * v[1], Var(0.3)) + abs(v[0] - v[1]);
    };
    auto plain = [](const std::vector<double>& v) {
        return std::max(v[0], v[1]) * std::min(v[0] * v[1], 0.3) + std::fabs(v[0] - v[1]);
    };
    check_gradient(taped, plain, {0.8, -0.5});
    check_gradient(taped, plain, {-0.2, 1.4});
}

TEST_CASE("hypot2 has zero partials at the origin") {
    Tape tape;
    Var a = ad::make_param(tape, 0.0);
    Var b = ad::make_param(tape, 0.0);
    const Var r = ad::hypot2(a, b);
    CHECK(r.v == 0.0);
    const auto g = ad::gradient(r);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
}

TEST_CASE("hypot2 away from the origin") {
    auto taped = [](const std::vector<Var>& v) { return ad::hypot2(v[0], v[1]); };
    auto plain = [](const std::vector<double>& v) { return std::hypot(v[0], v[1]); };
    check_gradient(taped, plain, {3.0, -4.0});
}

TEST_CASE("negdet penalty value and derivative") {
    CHECK(ad::negdet_penalty(1.0) == 0.0);
    CHECK(ad::negdet_penalty(0.0) == 0.0); // sign(0) contributes nothing
    CHECK(ad::negdet_penalty(-1.0) == doctest::Approx(std::exp(1.0)));

    Tape tape;
    Var d = ad::make_param(tape, -0.5);
    auto g = ad::gradient(ad::negdet_penalty(d));
    CHECK(g[0] == doctest::Approx(-std::exp(0.5)));

    Var z = ad::make_param(tape, 0.25);
    g = ad::gradient(ad::negdet_penalty(z));
    CHECK(g[0] == 0.0);
}

TEST_CASE("constants stay off-tape") {
    const Var a(2.0);
    const Var b(3.0);
    const Var c = a * b + ad::exp(a);
    CHECK(c.tape == nullptr);
    CHECK(c.v == doctest::Approx(6.0 + std::exp(2.0)));

    Tape tape;
    const Var p = ad::make_param(tape, 1.5);
    const Var mixed = p * a + b;
    CHECK(mixed.tape == &tape);
    const auto g = ad::gradient(mixed);
    CHECK(g[0] == doctest::Approx(2.0));
}

TEST_CASE("gradient error cases") {
    Tape tape;
    Var p = ad::make_param(tape, -1.0);
    CHECK_THROWS_AS((void)ad::gradient(ad::log(p)), NumericalError); // log(-1) = nan
    CHECK_THROWS_AS((void)ad::gradient(Var(1.0)), EvalError);        // constant, not taped
}

TEST_CASE("tape reuse across samples") {
    Tape tape;
    for (int i = 0; i < 3; ++i) {
        tape.clear();
        Var p = ad::make_param(tape, 1.0 + i);
        const auto g = ad::gradient(p * p);
        CHECK(g.size() == 1);
        CHECK(g[0] == doctest::Approx(2.0 * (1.0 + i)));
    }
}

TEST_CASE("grad_norm") {
    std::vector<double> g = {3.0, 4.0};
    CHECK(ad::grad_norm(g) == doctest::Approx(5.0));
}

TEST_CASE("Dual2<double> forward tangents match finite differences") {
    auto f = [](auto u, auto v) {
        using std::exp;
        using std::sin;
        using nsm::ad::exp;
        using nsm::ad::sin;
        return exp(u * v) + sin(u) / (v + 2.0);
    };
    const double u = 0.3, v = -0.7, h = 1e-6;
    const Dual2<double> du(u, 1.0, 0.0), dv(v, 0.0, 1.0);
    const auto r = f(du, dv);
    CHECK(r.v == doctest::Approx(f(u, v)));
    CHECK(r.du == doctest::Approx((f(u + h, v) - f(u - h, v)) / (2 * h)).epsilon(1e-7));
    CHECK(r.dv == doctest::Approx((f(u, v + h) - f(u, v - h)) / (2 * h)).epsilon(1e-7));
}

TEST_CASE("Dual2<Var> gives parameter gradients of tangent-derived losses") {
    // loss(theta) = d/du [ softplus(theta0 * u) * theta1 ] at u = 0.4
    //             = theta1 * theta0 * sigmoid(theta0 * u)
    const double u = 0.4;
    auto loss_of = [&](const std::vector<double>& th) {
        return th[1] * th[0] * ad::sigmoid(th[0] * u);
    };

    Tape tape;
    std::vector<double> theta = {1.3, -0.8};
    Var t0 = ad::make_param(tape, theta[0]);
    Var t1 = ad::make_param(tape, theta[1]);

    Dual2<Var> x(Var(u), Var(1.0), Var(0.0));
    const Dual2<Var> y = ad::mul_scalar(ad::softplus(ad::mul_scalar(x, t0)), t1);
    const Var loss = y.du;
    CHECK(loss.v == doctest::Approx(loss_of(theta)).epsilon(1e-12));

    const auto g = ad::gradient(loss);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        CHECK(g[i] == doctest::Approx(fd(loss_of, theta, i)).epsilon(1e-6));
    }
}

TEST_CASE("Dual2 arithmetic identities") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int i = 0; i < 100; ++i) {
        const Dual2<double> a(dist(rng), dist(rng), dist(rng));
        const Dual2<double> b(dist(rng) + 3.0, dist(rng), dist(rng));
        const auto q = a / b;
        const auto back = q * b;
        CHECK(back.v == doctest::Approx(a.v).epsilon(1e-12));
        CHECK(back.du == doctest::Approx(a.du).epsilon(1e-9));
        CHECK(back.dv == doctest::Approx(a.dv).epsilon(1e-9));
    }
}
