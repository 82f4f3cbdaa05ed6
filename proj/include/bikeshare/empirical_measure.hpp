#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bikeshare/errors.hpp"
#include "bikeshare/params.hpp"

namespace bikeshare {

/// Mass y(c, k) of stations in utilization class c holding k bikes.
///
/// Stored class-major in one flat vector so ODE solvers can treat it as a
/// plain state vector.
class EmpiricalMeasure {
public:
    EmpiricalMeasure() = default;

    EmpiricalMeasure(std::size_t classes, int capacity)
        : classes_(classes), capacity_(capacity),
          data_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(classes * (capacity + 1)))) {}

    EmpiricalMeasure(std::size_t classes, int capacity, Eigen::VectorXd data)
        : classes_(classes), capacity_(capacity), data_(std::move(data)) {
        if (data_.size() != static_cast<Eigen::Index>(classes * (capacity + 1)))
            throw ParameterError("EmpiricalMeasure: data length does not match classes*(K+1)");
    }

    /// Single-class measure from aggregated proportions y(0..K).
    static EmpiricalMeasure from_proportions(std::span<const double> y) {
        if (y.size() < 2) throw ParameterError("EmpiricalMeasure: need at least K+1 = 2 entries");
        EmpiricalMeasure m(1, static_cast<int>(y.size()) - 1);
        for (std::size_t k = 0; k < y.size(); ++k) m.data_[static_cast<Eigen::Index>(k)] = y[k];
        return m;
    }

    /// Spreads aggregated proportions over classes as y(c,k) = w_c * y(k).
    static EmpiricalMeasure from_proportions(std::span<const double> y,
                                             std::span<const UtilizationClass> classes) {
        EmpiricalMeasure m(classes.size(), static_cast<int>(y.size()) - 1);
        for (std::size_t c = 0; c < classes.size(); ++c)
            for (std::size_t k = 0; k < y.size(); ++k)
                m(c, static_cast<int>(k)) = classes[c].weight * y[k];
        return m;
    }

    std::size_t classes() const { return classes_; }
    int capacity() const { return capacity_; }

    double& operator()(std::size_t c, int k) { return data_[index(c, k)]; }
    double operator()(std::size_t c, int k) const { return data_[index(c, k)]; }

    /// y(k) summed over classes.
    double aggregate(int k) const {
        double s = 0.0;
        for (std::size_t c = 0; c < classes_; ++c) s += (*this)(c, k);
        return s;
    }

    Eigen::VectorXd aggregated() const {
        Eigen::VectorXd y(capacity_ + 1);
        for (int k = 0; k <= capacity_; ++k) y[k] = aggregate(k);
        return y;
    }

    /// Sum over (c,k) of k * y(c,k): docked bikes per station.
    double docked_per_station() const {
        double s = 0.0;
        for (int k = 1; k <= capacity_; ++k) s += k * aggregate(k);
        return s;
    }

    double class_mass(std::size_t c) const {
        double s = 0.0;
        for (int k = 0; k <= capacity_; ++k) s += (*this)(c, k);
        return s;
    }

    const Eigen::VectorXd& vector() const { return data_; }
    Eigen::VectorXd& vector() { return data_; }

    /// Throws ParameterError unless the measure is a probability measure
    /// whose class masses match the profile weights.
    void validate(std::span<const UtilizationClass> profile, double tol = 1e-12) const {
        if (profile.size() != classes_)
            throw ParameterError("EmpiricalMeasure: class count differs from utilization profile");
        if (data_.minCoeff() < -tol) throw ParameterError("EmpiricalMeasure: negative mass");
        if (std::abs(data_.sum() - 1.0) > tol)
            throw ParameterError("EmpiricalMeasure: total mass differs from 1");
        for (std::size_t c = 0; c < classes_; ++c)
            if (std::abs(class_mass(c) - profile[c].weight) > tol)
                throw ParameterError("EmpiricalMeasure: class mass differs from class weight");
    }

    bool operator==(const EmpiricalMeasure& o) const {
        return classes_ == o.classes_ && capacity_ == o.capacity_ && data_ == o.data_;
    }

private:
    Eigen::Index index(std::size_t c, int k) const {
        return static_cast<Eigen::Index>(c * static_cast<std::size_t>(capacity_ + 1) +
                                         static_cast<std::size_t>(k));
    }

    std::size_t classes_ = 0;
    int capacity_ = 0;
    Eigen::VectorXd data_;
};

}  // namespace bikeshare
