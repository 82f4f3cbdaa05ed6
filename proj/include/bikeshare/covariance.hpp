#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "bikeshare/empirical_measure.hpp"
#include "bikeshare/errors.hpp"
#include "bikeshare/model.hpp"
#include "bikeshare/params.hpp"
#include "bikeshare/rk4.hpp"

namespace bikeshare {

/// Mean and covariance of the Gaussian fluctuation process D_t.
struct CovarianceState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

namespace detail {

inline Eigen::VectorXd pack(const Eigen::VectorXd& y, const CovarianceState& s) {
    const Eigen::Index ny = y.size();
    const Eigen::Index n = s.mean.size();
    Eigen::VectorXd v(ny + n + n * n);
    v.head(ny) = y;
    v.segment(ny, n) = s.mean;
    v.tail(n * n) = Eigen::Map<const Eigen::VectorXd>(s.cov.data(), n * n);
    return v;
}

inline CovarianceState unpack_cov(const Eigen::VectorXd& v, Eigen::Index ny, Eigen::Index n) {
    CovarianceState s;
    s.mean = v.segment(ny, n);
    s.cov = Eigen::Map<const Eigen::MatrixXd>(v.data() + ny + n, n, n);
    return s;
}

}  // namespace detail

/// Integrates the linear-noise system
///
///   dy/dt = drift(t, y)
///   dm/dt = A m
///   dS/dt = A S + S A^T + B,       (A, B) = linearization(t, y)
///
/// jointly with RK4 so A and B are evaluated at the exact intermediate stages
/// of y. S is symmetrized after every step.
template <class Drift, class Linearization>
Trajectory<std::pair<Eigen::VectorXd, CovarianceState>> integrate_linear_noise(
    Drift&& drift_fn, Linearization&& linearization, const Eigen::VectorXd& y0,
    const CovarianceState& init, const TimeGrid& grid) {
    const Eigen::Index ny = y0.size();
    const Eigen::Index n = init.mean.size();
    if (init.cov.rows() != n || init.cov.cols() != n)
        throw ParameterError("integrate_linear_noise: covariance shape differs from mean length");

    auto field = [&](double t, const Eigen::VectorXd& v) {
        const Eigen::VectorXd y = v.head(ny);
        const auto [A, B] = linearization(t, y);
        const Eigen::Map<const Eigen::MatrixXd> S(v.data() + ny + n, n, n);
        Eigen::VectorXd dv(v.size());
        dv.head(ny) = drift_fn(t, y);
        dv.segment(ny, n) = A * v.segment(ny, n);
        const Eigen::MatrixXd dS = A * S + S * A.transpose() + B;
        dv.tail(n * n) = Eigen::Map<const Eigen::VectorXd>(dS.data(), n * n);
        return dv;
    };
    auto symmetrize = [&](Eigen::VectorXd& v) {
        Eigen::Map<Eigen::MatrixXd> S(v.data() + ny + n, n, n);
        const Eigen::MatrixXd sym = 0.5 * (S + S.transpose());
        S = sym;
    };

    auto raw = integrate(field, detail::pack(y0, init), grid, symmetrize);
    Trajectory<std::pair<Eigen::VectorXd, CovarianceState>> out;
    out.times = std::move(raw.times);
    out.states.reserve(raw.states.size());
    for (const auto& v : raw.states)
        out.states.emplace_back(v.head(ny), detail::unpack_cov(v, ny, n));
    return out;
}

/// Throws unless `cov` is symmetric and positive semidefinite up to `tol`.
inline void validate_covariance(const Eigen::MatrixXd& cov, double tol = 1e-10) {
    if (cov.rows() != cov.cols()) throw ParameterError("covariance must be square");
    if ((cov - cov.transpose()).lpNorm<Eigen::Infinity>() > tol)
        throw ParameterError("covariance must be symmetric");
    if (cov.size() > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -tol)
            throw ParameterError("covariance must be positive semidefinite");
    }
}

/// Mean E[D_t] and covariance Sigma(t) of the diffusion limit along a
/// mean-field trajectory. The trajectory must have been produced by
/// solve_mean_field with the same `step`; Sigma(0) and E[D_0] default to 0.
inline Trajectory<CovarianceState> solve_covariance(
    const ModelParams& p, const Trajectory<EmpiricalMeasure>& mf, double step = 0.01,
    std::optional<Eigen::MatrixXd> cov0 = std::nullopt,
    std::optional<Eigen::VectorXd> mean0 = std::nullopt) {
    if (mf.states.empty()) throw AlignmentError("solve_covariance: empty mean-field trajectory");
    const std::size_t C = mf.states.front().classes();
    const int K = mf.states.front().capacity();
    const Eigen::Index n = K + 1;

    CovarianceState init{mean0.value_or(Eigen::VectorXd::Zero(n)),
                         cov0.value_or(Eigen::MatrixXd::Zero(n, n))};
    if (init.mean.size() != n) throw ParameterError("solve_covariance: mean length must be K+1");
    validate_covariance(init.cov);

    TimeGrid grid;
    grid.step = step;
    if (mf.times.size() == 1) {
        grid.output_dt = step;
        grid.horizon = 0.0;
    } else {
        grid.output_dt = mf.times[1] - mf.times[0];
        grid.horizon = mf.times.back();
    }

    auto drift_fn = [&](double t, const Eigen::VectorXd& v) {
        return drift(EmpiricalMeasure(C, K, v), p, t);
    };
    auto lin = [&](double t, const Eigen::VectorXd& v) {
        const EmpiricalMeasure y(C, K, v);
        return std::pair<Eigen::MatrixXd, Eigen::MatrixXd>(jacobian(y, p, t), noise_rate(y, p, t));
    };
    auto joint = integrate_linear_noise(drift_fn, lin, mf.states.front().vector(), init, grid);

    if (joint.times.size() != mf.times.size())
        throw AlignmentError("solve_covariance: grid differs from mean-field trajectory");
    Trajectory<CovarianceState> out;
    out.times = joint.times;
    out.states.reserve(joint.states.size());
    for (std::size_t g = 0; g < joint.states.size(); ++g) {
        if (std::abs(joint.times[g] - mf.times[g]) > 1e-9 ||
            (joint.states[g].first - mf.states[g].vector()).lpNorm<Eigen::Infinity>() > 1e-8)
            throw AlignmentError("solve_covariance: mean-field trajectory was not produced with "
                                 "this step size");
        out.states.push_back(std::move(joint.states[g].second));
    }
    return out;
}

}  // namespace bikeshare
