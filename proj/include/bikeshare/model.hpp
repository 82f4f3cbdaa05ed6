#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "bikeshare/empirical_measure.hpp"
#include "bikeshare/params.hpp"

namespace bikeshare {

/// Scalar intensities shared by the drift, its Jacobian and the noise rate.
struct DerivedRates {
    /// gamma - sum_k k*y(k): bikes in circulation per station.
    double gamma_tilde = 0.0;
    /// Class-averaged retrieval intensity sum_c w_c * Lambda(t) / r_c.
    double lambda_tilde = 0.0;
    /// Per-station return intensity mu * gamma_tilde.
    double return_rate = 0.0;
    /// Lambda(t) / r_c for each class.
    std::vector<double> class_rates;
};

/// For non-stationary demand, Lambda is replaced by lambda(t).
inline DerivedRates derived_rates(const EmpiricalMeasure& y, const ModelParams& p, double t) {
    DerivedRates r;
    r.gamma_tilde = p.gamma() - y.docked_per_station();
    r.return_rate = p.travel_rate * r.gamma_tilde;
    r.class_rates.resize(p.class_count());
    for (std::size_t c = 0; c < p.class_count(); ++c) {
        r.class_rates[c] = p.class_rate(c, t);
        r.lambda_tilde += p.classes[c].weight * r.class_rates[c];
    }
    return r;
}

/// Mean-field vector field b(y), laid out like EmpiricalMeasure::vector().
///
/// Each class is a birth-death chain in k: retrievals move mass k -> k-1 at
/// rate Lambda/r_c, returns move k -> k+1 at rate mu*gamma_tilde.
inline Eigen::VectorXd drift(const EmpiricalMeasure& y, const ModelParams& p, double t) {
    const int K = y.capacity();
    const DerivedRates r = derived_rates(y, p, t);
    const double ret = r.return_rate;
    EmpiricalMeasure out(y.classes(), K);
    for (std::size_t c = 0; c < y.classes(); ++c) {
        const double lam = r.class_rates[c];
        out(c, 0) = -ret * y(c, 0) + lam * y(c, 1);
        for (int k = 1; k < K; ++k)
            out(c, k) = lam * y(c, k + 1) - (lam + ret) * y(c, k) + ret * y(c, k - 1);
        out(c, K) = -lam * y(c, K) + ret * y(c, K - 1);
    }
    return out.vector();
}

/// Drift on aggregated coordinates y(0..K) with retrievals at rate lambda_tilde.
/// Coincides with the aggregate of drift() when occupancy is independent of
/// the utilization class (always true for a single class).
inline Eigen::VectorXd aggregated_drift(const Eigen::VectorXd& y, double lambda_tilde, double gamma,
                                        double mu) {
    const int K = static_cast<int>(y.size()) - 1;
    double docked = 0.0;
    for (int k = 1; k <= K; ++k) docked += k * y[k];
    const double ret = mu * (gamma - docked);
    Eigen::VectorXd b(K + 1);
    b[0] = -ret * y[0] + lambda_tilde * y[1];
    for (int k = 1; k < K; ++k)
        b[k] = lambda_tilde * y[k + 1] - (lambda_tilde + ret) * y[k] + ret * y[k - 1];
    b[K] = -lambda_tilde * y[K] + ret * y[K - 1];
    return b;
}

/// A = b'(y) over aggregated coordinates. Columns sum to zero.
inline Eigen::MatrixXd jacobian(const EmpiricalMeasure& y, const ModelParams& p, double t) {
    const int K = y.capacity();
    const DerivedRates r = derived_rates(y, p, t);
    const double lam = r.lambda_tilde;
    const double ret = r.return_rate;
    const double mu = p.travel_rate;
    const Eigen::VectorXd ya = y.aggregated();

    // d(mu*gamma_tilde)/dy(j) = -mu*j
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(K + 1, K + 1);
    for (int j = 0; j <= K; ++j) {
        A(0, j) = mu * j * ya[0];
        for (int k = 1; k < K; ++k) A(k, j) = mu * j * (ya[k] - ya[k - 1]);
        A(K, j) = -mu * j * ya[K - 1];
    }
    A(0, 0) -= ret;
    A(0, 1) += lam;
    for (int k = 1; k < K; ++k) {
        A(k, k + 1) += lam;
        A(k, k) -= lam + ret;
        A(k, k - 1) += ret;
    }
    A(K, K) -= lam;
    A(K, K - 1) += ret;
    return A;
}

/// B = d/dt <M(i), M(j)>: symmetric tridiagonal noise-rate matrix, rows sum to zero.
inline Eigen::MatrixXd noise_rate(const EmpiricalMeasure& y, const ModelParams& p, double t) {
    const int K = y.capacity();
    const DerivedRates r = derived_rates(y, p, t);
    const double lam = r.lambda_tilde;
    const double ret = r.return_rate;
    const Eigen::VectorXd ya = y.aggregated();

    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(K + 1, K + 1);
    for (int k = 0; k <= K; ++k) {
        double d = 0.0;
        if (k < K) d += lam * ya[k + 1] + ret * ya[k];
        if (k > 0) d += lam * ya[k] + ret * ya[k - 1];
        B(k, k) = d;
    }
    for (int k = 0; k < K; ++k) {
        const double off = -(lam * ya[k + 1] + ret * ya[k]);
        B(k, k + 1) = off;
        B(k + 1, k) = off;
    }
    return B;
}

}  // namespace bikeshare
