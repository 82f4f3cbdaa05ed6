#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "bikeshare/empirical_measure.hpp"
#include "bikeshare/errors.hpp"
#include "bikeshare/model.hpp"
#include "bikeshare/params.hpp"
#include "bikeshare/rk4.hpp"

namespace bikeshare {

/// Deterministic limit y_t of the empirical measure, dy/dt = b(y).
inline Trajectory<EmpiricalMeasure> solve_mean_field(const ModelParams& p,
                                                     const EmpiricalMeasure& y0,
                                                     const TimeGrid& grid) {
    p.validate();
    y0.validate(p.classes, 1e-9);
    if (y0.capacity() != p.capacity)
        throw ParameterError("solve_mean_field: initial measure capacity differs from K");

    const std::size_t C = y0.classes();
    const int K = y0.capacity();
    auto field = [&](double t, const Eigen::VectorXd& v) {
        return drift(EmpiricalMeasure(C, K, v), p, t);
    };
    auto raw = integrate(field, y0.vector(), grid, NoProjection{}, NonNegativeCheck{1e-9});

    Trajectory<EmpiricalMeasure> out;
    out.times = std::move(raw.times);
    out.states.reserve(raw.states.size());
    for (auto& v : raw.states) out.states.emplace_back(C, K, std::move(v));
    return out;
}

/// Aggregated proportions y_t(0..K) along a trajectory.
inline Trajectory<Eigen::VectorXd> aggregate(const Trajectory<EmpiricalMeasure>& traj) {
    Trajectory<Eigen::VectorXd> out;
    out.times = traj.times;
    out.states.reserve(traj.states.size());
    for (const auto& s : traj.states) out.states.push_back(s.aggregated());
    return out;
}

struct EquilibriumOptions {
    double tolerance = 1e-10;  // sup-norm of the drift at the returned state
    double step = 0.01;
    double horizon_cap = 1e4;
};

/// Fixed point of the mean-field ODE reached by forward integration.
inline EmpiricalMeasure equilibrium(const ModelParams& p, const EmpiricalMeasure& y0,
                                    const EquilibriumOptions& opt = {}) {
    p.validate();
    if (!p.demand.is_stationary())
        throw ParameterError("equilibrium requires stationary demand");
    y0.validate(p.classes, 1e-9);
    if (!(opt.tolerance > 0.0) || !(opt.step > 0.0))
        throw ParameterError("equilibrium: tolerance and step must be positive");

    const std::size_t C = y0.classes();
    const int K = y0.capacity();
    auto field = [&](double t, const Eigen::VectorXd& v) {
        return drift(EmpiricalMeasure(C, K, v), p, t);
    };

    Eigen::VectorXd y = y0.vector();
    const auto steps_per_check = static_cast<long>(std::ceil(1.0 / opt.step));
    long step_index = 0;
    double t = 0.0;
    while (true) {
        const double residual = field(t, y).lpNorm<Eigen::Infinity>();
        if (residual <= opt.tolerance) return EmpiricalMeasure(C, K, y);
        if (t >= opt.horizon_cap)
            throw ConvergenceError("equilibrium: drift norm " + std::to_string(residual) +
                                   " above tolerance at horizon cap");
        for (long s = 0; s < steps_per_check; ++s, ++step_index) {
            t = static_cast<double>(step_index) * opt.step;
            y = rk4_step(field, t, y, opt.step);
        }
        t = static_cast<double>(step_index) * opt.step;
        if (!y.allFinite()) throw IntegrationError("equilibrium: non-finite state");
    }
}

}  // namespace bikeshare
