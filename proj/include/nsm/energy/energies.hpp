#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "nsm/domain.hpp"
#include "nsm/errors.hpp"
#include "nsm/linalg.hpp"
#include "nsm/net/neural_map.hpp"

namespace nsm::energy {

// Paper-default weights, shared by every experiment.
struct EnergyWeights {
    double lambda_n = 0.01;   // normal term of the overfit loss
    double lambda_b = 1e6;    // boundary energy B
    double lambda_inv = 1e2;  // injectivity energy G
    double lambda_c = 1e3;    // keypoint energy C
    double epsilon = 0.01;    // regularizer of the symmetric Dirichlet inverse

    void validate() const {
        if (lambda_n <= 0 || lambda_b <= 0 || lambda_inv <= 0 || lambda_c <= 0 || epsilon <= 0) {
            throw ConfigError("energy weights must all be positive");
        }
    }
};

// Per-sample differential data for a map with n x 2 Jacobian.
struct JacobianFrame {
    Mat<double, 3, 2> J{};   // rows beyond out_dim are zero
    int out_dim = 3;
    Mat<double, 2, 2> M{};   // pullback metric J^T J
    double det = 0.0;        // signed determinant, 2x2 case only
    Mat<double, 3, 2> tangent_basis{}; // orthonormal column basis, 3D case only
};

JacobianFrame make_frame(const Mat<double, 3, 2>& J, int out_dim);

// trace(M) + trace((M + eps I)^-1), the symmetric Dirichlet density.
template <class S>
S dirichlet_density(const Mat<S, 2, 2>& M, double eps) {
    Mat<S, 2, 2> Me = M;
    Me(0, 0) += S(eps);
    Me(1, 1) += S(eps);
    return trace(M) + trace(inv2(Me));
}

// || (trace(M)/||M||_F^2) M - I ||_F^2, zero exactly on similarities.
// Evaluated as ||trace(M) M - ||M||_F^2 I||_F^2 / ||M||_F^4, which cancels
// exactly (not just to rounding) when M is a scaled identity.
template <class S>
S conformal_density(const Mat<S, 2, 2>& M) {
    const S f = frobenius_sq(M);
    if (nsm::ad::value(f) == 0.0) {
        throw NumericalError("conformal_density: degenerate (zero) metric");
    }
    const S t = trace(M);
    Mat<S, 2, 2> A;
    A(0, 0) = t * M(0, 0) - f;
    A(0, 1) = t * M(0, 1);
    A(1, 0) = t * M(1, 0);
    A(1, 1) = t * M(1, 1) - f;
    return frobenius_sq(A) / (f * f);
}

// Mean of sigma(h(p)) over boundary samples (unweighted; apply lambda_b at
// the call site).
double boundary_energy(const net::NeuralMap& h, std::span<const Vec2d> boundary_samples,
                       Domain domain, const Rotation2& rot = Rotation2::identity());

// lambda_inv * mean of max(-sign(det) exp(-det), 0).
double injectivity_energy(std::span<const double> dets, double lambda_inv);

// lambda_c * sum_i ||h(R p_i) - q_i||^2.
double keypoint_energy(const net::NeuralMap& h, std::span<const Vec2d> P,
                       std::span<const Vec2d> Q, const Rotation2& rot, double lambda_c);

// Monte-Carlo estimate; per-sample densities are retained so medians can be
// reported alongside means.
struct MCEstimate {
    double mean = 0.0;
    std::size_t count = 0;
    std::vector<double> values;
    std::vector<std::size_t> flagged; // indices of non-finite densities

    double median() const;
};

MCEstimate mc_integrate(std::span<const double> densities, bool tolerate_nonfinite = false);

double median_of(std::vector<double> values);

} // namespace nsm::energy
