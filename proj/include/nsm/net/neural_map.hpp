#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nsm/ad/dual2.hpp"
#include "nsm/ad/tape.hpp"
#include "nsm/errors.hpp"
#include "nsm/linalg.hpp"

namespace nsm::net {

enum class Activation { softplus, relu, leaky_relu };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Wiring: an affine lift in_dim -> width, `depth` hidden layers of size
// width -> width (residual: x <- x + act(W x + b); plain: x <- act(W x + b)),
// then an affine projection width -> out_dim. identity_skip adds the input to
// the first min(in_dim, out_dim) outputs, used to initialize 2D warps near
// the identity together with a small final_init_scale.
struct Architecture {
    int depth = 10;
    int width = 256;
    int in_dim = 2;
    int out_dim = 3;
    bool residual = true;
    bool identity_skip = false;
    Activation activation = Activation::softplus;
    double final_init_scale = 1.0;
};

inline constexpr int kMaxWidth = 512;

void validate(const Architecture& a);

inline std::size_t param_count(const Architecture& a) {
    const std::size_t w = static_cast<std::size_t>(a.width);
    return w * a.in_dim + w                       // lift
         + static_cast<std::size_t>(a.depth) * (w * w + w)  // hidden
         + static_cast<std::size_t>(a.out_dim) * (w + 1);   // projection
}

struct NeuralMap {
    Architecture arch;
    std::vector<double> params;
};

// Seeded uniform +-sqrt(6/(fan_in+fan_out)) initialization per layer; the
// final projection is additionally scaled by arch.final_init_scale.
NeuralMap build(const Architecture& arch, std::uint64_t seed);

namespace detail {

template <class S>
S apply_act(Activation act, const S& x) {
    using nsm::ad::softplus;
    using nsm::ad::relu;
    using nsm::ad::leaky_relu;
    switch (act) {
        case Activation::softplus: return softplus(x);
        case Activation::relu: return relu(x);
        case Activation::leaky_relu: return leaky_relu(x);
    }
    return x;
}

template <class S>
void check_finite(const S* x, int n, const char* stage, int layer) {
    using nsm::ad::value;
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(value(x[i]))) {
            std::string where = std::string("non-finite value in ") + stage;
            if (layer >= 0) where += " " + std::to_string(layer);
            throw EvalError(where);
        }
    }
}

} // namespace detail

// Forward pass, generic over compute scalar S (double, Dual2<double>, Var,
// Dual2<Var>) and parameter scalar P (double or Var).
template <class S, class P>
std::array<S, 3> forward(const Architecture& a, std::span<const P> params,
                         const std::array<S, 2>& in) {
    using nsm::ad::mul_scalar;
    std::array<S, kMaxWidth> x, y;
    std::size_t off = 0;

    // lift
    for (int r = 0; r < a.width; ++r) {
        S acc = S(params[off + static_cast<std::size_t>(a.width) * a.in_dim + r]); // bias
        for (int c = 0; c < a.in_dim; ++c) {
            acc += mul_scalar(in[c], params[off + static_cast<std::size_t>(r) * a.in_dim + c]);
        }
        x[r] = acc;
    }
    off += static_cast<std::size_t>(a.width) * a.in_dim + a.width;
    detail::check_finite(x.data(), a.width, "lift layer", -1);

    for (int layer = 0; layer < a.depth; ++layer) {
        const std::size_t wsz = static_cast<std::size_t>(a.width) * a.width;
        for (int r = 0; r < a.width; ++r) {
            S acc = S(params[off + wsz + r]);
            const std::size_t row = off + static_cast<std::size_t>(r) * a.width;
            for (int c = 0; c < a.width; ++c) {
                acc += mul_scalar(x[c], params[row + c]);
            }
            y[r] = detail::apply_act(a.activation, acc);
        }
        if (a.residual) {
            for (int r = 0; r < a.width; ++r) x[r] += y[r];
        } else {
            for (int r = 0; r < a.width; ++r) x[r] = y[r];
        }
        off += wsz + a.width;
        detail::check_finite(x.data(), a.width, "hidden layer", layer);
    }

    std::array<S, 3> out;
    for (int r = 0; r < a.out_dim; ++r) {
        S acc = S(params[off + static_cast<std::size_t>(a.out_dim) * a.width + r]);
        const std::size_t row = off + static_cast<std::size_t>(r) * a.width;
        for (int c = 0; c < a.width; ++c) {
            acc += mul_scalar(x[c], params[row + c]);
        }
        out[r] = acc;
    }
    if (a.identity_skip) {
        const int n = a.in_dim < a.out_dim ? a.in_dim : a.out_dim;
        for (int r = 0; r < n; ++r) out[r] += in[r];
    }
    detail::check_finite(out.data(), a.out_dim, "output layer", -1);
    return out;
}

template <class S>
std::array<S, 3> forward(const NeuralMap& m, const std::array<S, 2>& in) {
    return forward<S, double>(m.arch, std::span<const double>(m.params), in);
}

// Exact input-Jacobian via two-tangent forward mode. T is the underlying
// scalar (double for inference, Var when parameter gradients are needed).
template <class T, class P>
void forward_with_jacobian(const Architecture& a, std::span<const P> params,
                           const std::array<T, 2>& p, std::array<T, 3>& image,
                           Mat<T, 3, 2>& jac) {
    using D = nsm::ad::Dual2<T>;
    const std::array<D, 2> in = {D(p[0], T(1.0), T(0.0)), D(p[1], T(0.0), T(1.0))};
    const std::array<D, 3> out = forward<D, P>(a, params, in);
    for (int r = 0; r < a.out_dim; ++r) {
        image[r] = out[r].v;
        jac(r, 0) = out[r].du;
        jac(r, 1) = out[r].dv;
    }
}

inline void forward_with_jacobian(const NeuralMap& m, const std::array<double, 2>& p,
                                  std::array<double, 3>& image, Mat<double, 3, 2>& jac) {
    forward_with_jacobian<double, double>(m.arch, std::span<const double>(m.params), p, image, jac);
}

// Batch evaluation, order-preserving.
std::vector<std::array<double, 3>> evaluate(const NeuralMap& m,
                                            std::span<const std::array<double, 2>> points);

struct CheckpointMeta {
    std::string name;
    std::string creation_info; // tool/config provenance; never a timestamp
    double train_loss = 0.0;
};

void save_checkpoint(const NeuralMap& m, const std::string& path, const CheckpointMeta& meta);
NeuralMap load_checkpoint(const std::string& path);
// Throws CheckpointShapeError when the stored map's dimensions differ.
NeuralMap load_checkpoint(const std::string& path, int expected_in_dim, int expected_out_dim);

} // namespace nsm::net
