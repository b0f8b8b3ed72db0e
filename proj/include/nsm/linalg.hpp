#pragma once

#include <array>
#include <cstddef>

#include "nsm/ad/dual2.hpp"
#include "nsm/ad/tape.hpp"
#include "nsm/errors.hpp"

namespace nsm {

// Small fixed-size matrices over any of the autodiff scalar types. Row-major.
template <class S, int R, int C>
struct Mat {
    std::array<S, static_cast<std::size_t>(R) * C> a{};

    S& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * C + c]; }
    const S& operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * C + c]; }

    static Mat identity() {
        static_assert(R == C);
        Mat m;
        for (int i = 0; i < R; ++i)
            for (int j = 0; j < C; ++j) m(i, j) = S(i == j ? 1.0 : 0.0);
        return m;
    }
};

template <class S, int N>
using Vec = std::array<S, static_cast<std::size_t>(N)>;

using Mat22 = Mat<double, 2, 2>;
using Mat32 = Mat<double, 3, 2>;

template <class A, class B, int R, int K, int C>
auto matmul(const Mat<A, R, K>& x, const Mat<B, K, C>& y) {
    using SR = decltype(std::declval<A>() * std::declval<B>());
    Mat<SR, R, C> r;
    for (int i = 0; i < R; ++i) {
        for (int j = 0; j < C; ++j) {
            SR acc = x(i, 0) * y(0, j);
            for (int k = 1; k < K; ++k) acc += x(i, k) * y(k, j);
            r(i, j) = acc;
        }
    }
    return r;
}

template <class S, int R, int C>
Mat<S, C, R> transpose(const Mat<S, R, C>& m) {
    Mat<S, C, R> r;
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j) r(j, i) = m(i, j);
    return r;
}

// M = J^T J, the pullback metric of an n x 2 Jacobian.
template <class S, int N>
Mat<S, 2, 2> pullback_metric(const Mat<S, N, 2>& j) {
    Mat<S, 2, 2> m;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            S acc = j(0, a) * j(0, b);
            for (int k = 1; k < N; ++k) acc += j(k, a) * j(k, b);
            m(a, b) = acc;
        }
    }
    return m;
}

template <class S, int N>
S trace(const Mat<S, N, N>& m) {
    S t = m(0, 0);
    for (int i = 1; i < N; ++i) t += m(i, i);
    return t;
}

template <class S>
S det2(const Mat<S, 2, 2>& m) {
    return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
}

template <class S>
Mat<S, 2, 2> inv2(const Mat<S, 2, 2>& m) {
    const S d = det2(m);
    Mat<S, 2, 2> r;
    r(0, 0) = m(1, 1) / d;
    r(0, 1) = -m(0, 1) / d;
    r(1, 0) = -m(1, 0) / d;
    r(1, 1) = m(0, 0) / d;
    return r;
}

template <class S, int R, int C>
S frobenius_sq(const Mat<S, R, C>& m) {
    S s = m.a[0] * m.a[0];
    for (std::size_t i = 1; i < m.a.size(); ++i) s += m.a[i] * m.a[i];
    return s;
}

template <class S, std::size_t N>
S dot(const std::array<S, N>& a, const std::array<S, N>& b) {
    S s = a[0] * b[0];
    for (std::size_t i = 1; i < N; ++i) s += a[i] * b[i];
    return s;
}

template <class S>
Vec<S, 3> cross3(const Vec<S, 3>& a, const Vec<S, 3>& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

template <class S, std::size_t N>
S norm(const std::array<S, N>& a) {
    using std::sqrt;
    using ad::sqrt;
    return sqrt(dot(a, a));
}

template <class S, int N>
Vec<S, N> column(const Mat<S, N, 2>& m, int c) {
    Vec<S, N> v;
    for (int i = 0; i < N; ++i) v[i] = m(i, c);
    return v;
}

} // namespace nsm
