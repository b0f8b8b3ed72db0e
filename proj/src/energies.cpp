#include "nsm/energy/energies.hpp"

namespace nsm::energy {

JacobianFrame make_frame(const Mat<double, 3, 2>& J, int out_dim) {
    JacobianFrame f;
    f.J = J;
    f.out_dim = out_dim;
    f.M = pullback_metric(f.J);
    if (out_dim == 2) {
        Mat<double, 2, 2> j2;
        j2(0, 0) = J(0, 0);
        j2(0, 1) = J(0, 1);
        j2(1, 0) = J(1, 0);
        j2(1, 1) = J(1, 1);
        f.det = det2(j2);
    } else {
        // Gram-Schmidt over the two columns.
        Vec<double, 3> c0 = column(J, 0);
        Vec<double, 3> c1 = column(J, 1);
        const double n0 = norm(c0);
        if (n0 < 1e-12) throw SingularJacobianError("tangent basis: first column is degenerate");
        for (auto& x : c0) x /= n0;
        const double proj = dot(c0, c1);
        for (int i = 0; i < 3; ++i) c1[i] -= proj * c0[i];
        const double n1 = norm(c1);
        if (n1 < 1e-12) throw SingularJacobianError("tangent basis: columns are parallel");
        for (auto& x : c1) x /= n1;
        for (int i = 0; i < 3; ++i) {
            f.tangent_basis(i, 0) = c0[i];
            f.tangent_basis(i, 1) = c1[i];
        }
    }
    return f;
}

double boundary_energy(const net::NeuralMap& h, std::span<const Vec2d> boundary_samples,
                       Domain domain, const Rotation2& rot) {
    if (boundary_samples.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& p : boundary_samples) {
        const auto rp = rot.apply(p);
        const auto img = net::forward<double>(h, {rp[0], rp[1]});
        sum += boundary_sigma<double>(domain, img[0], img[1]);
    }
    return sum / static_cast<double>(boundary_samples.size());
}

double injectivity_energy(std::span<const double> dets, double lambda_inv) {
    if (dets.empty()) return 0.0;
    double sum = 0.0;
    for (double d : dets) {
        if (!std::isfinite(d)) throw NumericalError("injectivity_energy: non-finite determinant");
        sum += ad::negdet_penalty(d);
    }
    return lambda_inv * sum / static_cast<double>(dets.size());
}

double keypoint_energy(const net::NeuralMap& h, std::span<const Vec2d> P,
                       std::span<const Vec2d> Q, const Rotation2& rot, double lambda_c) {
    if (P.size() != Q.size()) throw ConfigError("keypoint_energy: P and Q differ in size");
    if (P.empty()) throw ConfigError("keypoint_energy: at least one pair is required");
    double sum = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
        const auto rp = rot.apply(P[i]);
        const auto img = net::forward<double>(h, {rp[0], rp[1]});
        const double dx = img[0] - Q[i][0];
        const double dy = img[1] - Q[i][1];
        sum += dx * dx + dy * dy;
    }
    return lambda_c * sum;
}

double MCEstimate::median() const {
    return median_of(values);
}

double median_of(std::vector<double> values) {
    if (values.empty()) throw NumericalError("median of empty sample set");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    double m = values[mid];
    if (values.size() % 2 == 0) {
        const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
        m = 0.5 * (lo + m);
    }
    return m;
}

MCEstimate mc_integrate(std::span<const double> densities, bool tolerate_nonfinite) {
    if (densities.empty()) throw NumericalError("mc_integrate: no samples");
    MCEstimate e;
    e.values.assign(densities.begin(), densities.end());
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < densities.size(); ++i) {
        if (!std::isfinite(densities[i])) {
            e.flagged.push_back(i);
            continue;
        }
        sum += densities[i];
        ++used;
    }
    if (!e.flagged.empty() && !tolerate_nonfinite) {
        throw NumericalError("mc_integrate: " + std::to_string(e.flagged.size()) +
                             " non-finite densities (pass tolerate_nonfinite to skip them)");
    }
    if (used == 0) throw NumericalError("mc_integrate: all densities non-finite");
    e.count = used;
    e.mean = sum / static_cast<double>(used);
    return e;
}

} // namespace nsm::energy
