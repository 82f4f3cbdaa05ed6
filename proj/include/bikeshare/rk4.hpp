#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bikeshare/errors.hpp"

namespace bikeshare {

/// Fixed-step integration schedule. The output spacing must be a whole
/// number of steps; states are reported at t = g * output_dt for every
/// g with g * output_dt <= horizon.
struct TimeGrid {
    double horizon = 10.0;
    double step = 0.01;
    double output_dt = 0.1;

    void validate() const {
        if (!(step > 0.0) || !std::isfinite(step)) throw ParameterError("step must be positive");
        if (!(horizon >= 0.0) || !std::isfinite(horizon))
            throw ParameterError("horizon must be non-negative");
        if (!(output_dt > 0.0)) throw ParameterError("output_dt must be positive");
        const double ratio = output_dt / step;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || std::round(ratio) < 1.0)
            throw ParameterError("output_dt must be a positive integer multiple of step");
    }

    std::size_t steps_per_output() const {
        return static_cast<std::size_t>(std::llround(output_dt / step));
    }

    /// Number of output points including t = 0.
    std::size_t output_count() const {
        return static_cast<std::size_t>(std::floor(horizon / output_dt + 1e-9)) + 1;
    }

    double time_at(std::size_t g) const { return static_cast<double>(g) * output_dt; }

    std::vector<double> times() const {
        std::vector<double> ts(output_count());
        for (std::size_t g = 0; g < ts.size(); ++g) ts[g] = time_at(g);
        return ts;
    }
};

/// Time grid plus one state per grid point.
template <class State>
struct Trajectory {
    std::vector<double> times;
    std::vector<State> states;

    std::size_t size() const { return times.size(); }
};

/// Accept every state.
struct NoStateCheck {
    void operator()(double, const Eigen::VectorXd&) const {}
};

/// Rejects states with an entry below -tolerance.
struct NonNegativeCheck {
    double tolerance = 1e-9;
    void operator()(double t, const Eigen::VectorXd& y) const {
        if (y.size() > 0 && y.minCoeff() < -tolerance)
            throw IntegrationError("state left the non-negative region at t = " + std::to_string(t));
    }
};

struct NoProjection {
    void operator()(Eigen::VectorXd&) const {}
};

/// One classical RK4 step of size h from (t, y).
template <class Field>
Eigen::VectorXd rk4_step(Field& field, double t, const Eigen::VectorXd& y, double h) {
    const Eigen::VectorXd k1 = field(t, y);
    const Eigen::VectorXd k2 = field(t + 0.5 * h, y + (0.5 * h) * k1);
    const Eigen::VectorXd k3 = field(t + 0.5 * h, y + (0.5 * h) * k2);
    const Eigen::VectorXd k4 = field(t + h, y + h * k3);
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Integrates dy/dt = field(t, y) with classical fixed-step RK4.
///
/// `project` runs after every step (e.g. symmetrization); `check` runs on
/// every accepted state and throws to abort. Non-finite states always abort.
template <class Field, class Projection = NoProjection, class Check = NoStateCheck>
Trajectory<Eigen::VectorXd> integrate(Field&& field, Eigen::VectorXd y0, const TimeGrid& grid,
                                      Projection project = {}, Check check = {}) {
    grid.validate();
    const std::size_t per_out = grid.steps_per_output();
    const std::size_t n_out = grid.output_count();

    Trajectory<Eigen::VectorXd> traj;
    traj.times.reserve(n_out);
    traj.states.reserve(n_out);
    check(0.0, y0);
    traj.times.push_back(0.0);
    traj.states.push_back(y0);

    Eigen::VectorXd y = std::move(y0);
    std::size_t step_index = 0;
    for (std::size_t g = 1; g < n_out; ++g) {
        for (std::size_t s = 0; s < per_out; ++s, ++step_index) {
            const double t = static_cast<double>(step_index) * grid.step;
            y = rk4_step(field, t, y, grid.step);
            project(y);
            if (!y.allFinite())
                throw IntegrationError("non-finite state at t = " + std::to_string(t + grid.step));
            check(t + grid.step, y);
        }
        traj.times.push_back(grid.time_at(g));
        traj.states.push_back(y);
    }
    return traj;
}

}  // namespace bikeshare
