#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nsm/errors.hpp"

namespace nsm::ad {

// Stable scalar helpers, shared with the double-precision code paths.
inline double softplus(double x) {
    return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double leaky_relu(double x) { return x > 0.0 ? x : 0.01 * x; }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double value(double x) { return x; }

constexpr std::uint32_t kNoParent = 0xFFFFFFFFu;

// Ordered record of primitive operations. Each node stores up to two parent
// indices with the local partial derivative along each edge; a reverse sweep
// over the record yields exact gradients. Leaves created through param() are
// the differentiation targets. Tapes are meant to be thread-local: one tape
// records one sample's computation and is cleared (capacity kept) for the next.
class Tape {
public:
    struct Node {
        double w0, w1;
        std::uint32_t p0, p1;
    };

    void clear() {
        nodes_.clear();
        param_nodes_.clear();
    }

    std::size_t size() const { return nodes_.size(); }
    std::size_t num_params() const { return param_nodes_.size(); }

    std::uint32_t push_leaf() {
        nodes_.push_back({0.0, 0.0, kNoParent, kNoParent});
        return static_cast<std::uint32_t>(nodes_.size() - 1);
    }

    std::uint32_t push1(std::uint32_t a, double wa) {
        nodes_.push_back({wa, 0.0, a, kNoParent});
        return static_cast<std::uint32_t>(nodes_.size() - 1);
    }

    std::uint32_t push2(std::uint32_t a, double wa, std::uint32_t b, double wb) {
        nodes_.push_back({wa, wb, a, b});
        return static_cast<std::uint32_t>(nodes_.size() - 1);
    }

    void mark_param(std::uint32_t idx) { param_nodes_.push_back(idx); }
    std::span<const std::uint32_t> param_nodes() const { return param_nodes_; }

    // Reverse sweep. Adds d(loss)/d(param_k) into grad_out[k].
    void accumulate_gradient(std::uint32_t loss_idx, std::span<double> grad_out) {
        adj_.assign(nodes_.size(), 0.0);
        adj_[loss_idx] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            const double a = adj_[i];
            if (a == 0.0) continue;
            const Node& n = nodes_[i];
            if (n.p0 != kNoParent) adj_[n.p0] += a * n.w0;
            if (n.p1 != kNoParent) adj_[n.p1] += a * n.w1;
        }
        for (std::size_t k = 0; k < param_nodes_.size(); ++k) {
            grad_out[k] += adj_[param_nodes_[k]];
        }
    }

private:
    std::vector<Node> nodes_;
    std::vector<std::uint32_t> param_nodes_;
    std::vector<double> adj_;
};

// A scalar recorded on a tape. A Var with no tape is a constant; arithmetic
// between constants stays off-tape, arithmetic mixing constants and taped
// values records only the taped dependencies.
struct Var {
    double v = 0.0;
    std::uint32_t i = kNoParent;
    Tape* tape = nullptr;

    Var() = default;
    Var(double value) : v(value) {} // NOLINT(google-explicit-constructor)
    Var(double value, std::uint32_t idx, Tape* t) : v(value), i(idx), tape(t) {}
};

inline Var make_param(Tape& tape, double v) {
    const std::uint32_t idx = tape.push_leaf();
    tape.mark_param(idx);
    return Var(v, idx, &tape);
}

inline Var make_input(Tape& tape, double v) { return Var(v, tape.push_leaf(), &tape); }

inline double value(const Var& x) { return x.v; }

namespace detail {

inline Var unary(const Var& a, double v, double wa) {
    if (!a.tape) return Var(v);
    return Var(v, a.tape->push1(a.i, wa), a.tape);
}

inline Var binary(const Var& a, const Var& b, double v, double wa, double wb) {
    Tape* t = a.tape ? a.tape : b.tape;
    if (!t) return Var(v);
    return Var(v, t->push2(a.tape ? a.i : kNoParent, wa, b.tape ? b.i : kNoParent, wb), t);
}

} // namespace detail

inline Var operator+(const Var& a, const Var& b) { return detail::binary(a, b, a.v + b.v, 1.0, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return detail::binary(a, b, a.v - b.v, 1.0, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return detail::binary(a, b, a.v * b.v, b.v, a.v); }
inline Var operator/(const Var& a, const Var& b) {
    const double v = a.v / b.v;
    return detail::binary(a, b, v, 1.0 / b.v, -v / b.v);
}
inline Var operator-(const Var& a) { return detail::unary(a, -a.v, -1.0); }
inline Var& operator+=(Var& a, const Var& b) { a = a + b; return a; }
inline Var& operator-=(Var& a, const Var& b) { a = a - b; return a; }
inline Var& operator*=(Var& a, const Var& b) { a = a * b; return a; }

inline Var exp(const Var& a) {
    const double e = std::exp(a.v);
    return detail::unary(a, e, e);
}

inline Var log(const Var& a) { return detail::unary(a, std::log(a.v), 1.0 / a.v); }

inline Var sqrt(const Var& a) {
    const double s = std::sqrt(a.v);
    return detail::unary(a, s, s > 0.0 ? 0.5 / s : 0.0);
}

inline Var sin(const Var& a) { return detail::unary(a, std::sin(a.v), std::cos(a.v)); }
inline Var cos(const Var& a) { return detail::unary(a, std::cos(a.v), -std::sin(a.v)); }

inline Var abs(const Var& a) {
    return detail::unary(a, std::fabs(a.v), a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0));
}

inline Var softplus(const Var& a) { return detail::unary(a, softplus(a.v), sigmoid(a.v)); }

inline Var sigmoid(const Var& a) {
    const double s = sigmoid(a.v);
    return detail::unary(a, s, s * (1.0 - s));
}

inline Var relu(const Var& a) { return detail::unary(a, relu(a.v), a.v > 0.0 ? 1.0 : 0.0); }

inline Var leaky_relu(const Var& a) {
    return detail::unary(a, leaky_relu(a.v), a.v > 0.0 ? 1.0 : 0.01);
}

inline Var max(const Var& a, const Var& b) {
    return a.v >= b.v ? detail::binary(a, b, a.v, 1.0, 0.0)
                      : detail::binary(a, b, b.v, 0.0, 1.0);
}

inline Var min(const Var& a, const Var& b) {
    return a.v <= b.v ? detail::binary(a, b, a.v, 1.0, 0.0)
                      : detail::binary(a, b, b.v, 0.0, 1.0);
}

// sqrt(a^2 + b^2) with zero partials at the origin.
inline double hypot2(double a, double b) { return std::hypot(a, b); }
inline Var hypot2(const Var& a, const Var& b) {
    const double r = std::hypot(a.v, b.v);
    if (r == 0.0) return detail::binary(a, b, 0.0, 0.0, 0.0);
    return detail::binary(a, b, r, a.v / r, b.v / r);
}

// Determinant penalty max(-sign(d) exp(-d), 0); sign(0) := 0 so d = 0
// contributes nothing. Recorded as a single primitive so the clamp has a
// well-defined partial everywhere.
inline double negdet_penalty(double d) { return d < 0.0 ? std::exp(-d) : 0.0; }
inline Var negdet_penalty(const Var& a) {
    if (a.v < 0.0) {
        const double e = std::exp(-a.v);
        return detail::unary(a, e, -e);
    }
    return detail::unary(a, 0.0, 0.0);
}

// Gradient of a taped loss with respect to the tape's parameters.
inline std::vector<double> gradient(const Var& loss) {
    if (!std::isfinite(loss.v)) throw NumericalError("gradient: loss is not finite");
    if (!loss.tape) throw EvalError("gradient: loss was not recorded on a tape");
    std::vector<double> grad(loss.tape->num_params(), 0.0);
    loss.tape->accumulate_gradient(loss.i, grad);
    return grad;
}

inline double grad_norm(std::span<const double> g) {
    double s = 0.0;
    for (double x : g) s += x * x;
    return std::sqrt(s);
}

} // namespace nsm::ad
