#pragma once

#include <cmath>

#include "nsm/ad/tape.hpp"

namespace nsm::ad {

// Forward-mode scalar carrying two directional derivatives, one per canonical
// input axis of the 2D domain. With T = double this is plain forward mode;
// with T = Var the tangents themselves are taped, so reverse mode over the
// tape differentiates Jacobian-dependent losses with respect to parameters.
template <class T>
struct Dual2 {
    T v{};
    T du{};
    T dv{};

    Dual2() = default;
    Dual2(T value) : v(value), du(0.0), dv(0.0) {} // NOLINT(google-explicit-constructor)
    Dual2(T value, T d0, T d1) : v(value), du(d0), dv(d1) {}
};

template <class T>
double value(const Dual2<T>& x) {
    return value(x.v);
}

template <class T>
Dual2<T> operator+(const Dual2<T>& a, const Dual2<T>& b) {
    return {a.v + b.v, a.du + b.du, a.dv + b.dv};
}

template <class T>
Dual2<T> operator-(const Dual2<T>& a, const Dual2<T>& b) {
    return {a.v - b.v, a.du - b.du, a.dv - b.dv};
}

template <class T>
Dual2<T> operator-(const Dual2<T>& a) {
    return {-a.v, -a.du, -a.dv};
}

template <class T>
Dual2<T> operator*(const Dual2<T>& a, const Dual2<T>& b) {
    return {a.v * b.v, a.du * b.v + a.v * b.du, a.dv * b.v + a.v * b.dv};
}

template <class T>
Dual2<T> operator/(const Dual2<T>& a, const Dual2<T>& b) {
    const T q = a.v / b.v;
    return {q, (a.du - q * b.du) / b.v, (a.dv - q * b.dv) / b.v};
}

template <class T> Dual2<T>& operator+=(Dual2<T>& a, const Dual2<T>& b) { a = a + b; return a; }
template <class T> Dual2<T>& operator-=(Dual2<T>& a, const Dual2<T>& b) { a = a - b; return a; }
template <class T> Dual2<T>& operator*=(Dual2<T>& a, const Dual2<T>& b) { a = a * b; return a; }

// Mixed arithmetic with plain constants.
template <class T> Dual2<T> operator+(const Dual2<T>& a, double c) { return {a.v + T(c), a.du, a.dv}; }
template <class T> Dual2<T> operator+(double c, const Dual2<T>& a) { return a + c; }
template <class T> Dual2<T> operator-(const Dual2<T>& a, double c) { return {a.v - T(c), a.du, a.dv}; }
template <class T> Dual2<T> operator-(double c, const Dual2<T>& a) { return {T(c) - a.v, -a.du, -a.dv}; }
template <class T> Dual2<T> operator*(const Dual2<T>& a, double c) { return {a.v * T(c), a.du * T(c), a.dv * T(c)}; }
template <class T> Dual2<T> operator*(double c, const Dual2<T>& a) { return a * c; }
template <class T> Dual2<T> operator/(const Dual2<T>& a, double c) { return a * (1.0 / c); }

template <class T>
Dual2<T> exp(const Dual2<T>& a) {
    using std::exp;
    const T e = exp(a.v);
    return {e, e * a.du, e * a.dv};
}

template <class T>
Dual2<T> log(const Dual2<T>& a) {
    using std::log;
    return {log(a.v), a.du / a.v, a.dv / a.v};
}

template <class T>
Dual2<T> sqrt(const Dual2<T>& a) {
    using std::sqrt;
    const T s = sqrt(a.v);
    const T h = T(0.5) / s;
    return {s, h * a.du, h * a.dv};
}

template <class T>
Dual2<T> sin(const Dual2<T>& a) {
    using std::sin;
    using std::cos;
    const T c = cos(a.v);
    return {sin(a.v), c * a.du, c * a.dv};
}

template <class T>
Dual2<T> cos(const Dual2<T>& a) {
    using std::sin;
    using std::cos;
    const T s = -sin(a.v);
    return {cos(a.v), s * a.du, s * a.dv};
}

template <class T>
Dual2<T> softplus(const Dual2<T>& a) {
    const T s = sigmoid(a.v);
    return {softplus(a.v), s * a.du, s * a.dv};
}

template <class T>
Dual2<T> relu(const Dual2<T>& a) {
    const double g = value(a.v) > 0.0 ? 1.0 : 0.0;
    return {relu(a.v), a.du * T(g), a.dv * T(g)};
}

template <class T>
Dual2<T> leaky_relu(const Dual2<T>& a) {
    const double g = value(a.v) > 0.0 ? 1.0 : 0.01;
    return {leaky_relu(a.v), a.du * T(g), a.dv * T(g)};
}

template <class T>
Dual2<T> abs(const Dual2<T>& a) {
    const double g = value(a.v) > 0.0 ? 1.0 : (value(a.v) < 0.0 ? -1.0 : 0.0);
    return {abs(a.v), a.du * T(g), a.dv * T(g)};
}

template <class T>
Dual2<T> max(const Dual2<T>& a, const Dual2<T>& b) {
    return value(a.v) >= value(b.v) ? a : b;
}

template <class T>
Dual2<T> min(const Dual2<T>& a, const Dual2<T>& b) {
    return value(a.v) <= value(b.v) ? a : b;
}

// Multiplies a Dual2 value by a parameter scalar (double or Var) without
// lifting the parameter to a Dual2 with constant-zero tangents.
template <class T, class P>
Dual2<T> mul_scalar(const Dual2<T>& x, const P& w) {
    return {x.v * w, x.du * w, x.dv * w};
}

inline double mul_scalar(double x, double w) { return x * w; }
inline Var mul_scalar(const Var& x, double w) { return x * Var(w); }
inline Var mul_scalar(const Var& x, const Var& w) { return x * w; }

} // namespace nsm::ad
