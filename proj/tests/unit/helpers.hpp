#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "bikeshare/empirical_measure.hpp"
#include "bikeshare/params.hpp"
#include "bikeshare/random.hpp"

namespace testing_util {

/// Random probability vector of length n (normalized exponentials).
inline std::vector<double> random_simplex(bikeshare::Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    double s = 0.0;
    for (auto& x : v) {
        x = rng.exponential(1.0);
        s += x;
    }
    for (auto& x : v) x /= s;
    return v;
}

/// Random valid measure for the given classes, each class spread independently.
inline bikeshare::EmpiricalMeasure random_measure(bikeshare::Rng& rng, int K,
                                                  const std::vector<bikeshare::UtilizationClass>& classes) {
    bikeshare::EmpiricalMeasure y(classes.size(), K);
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const auto v = random_simplex(rng, static_cast<std::size_t>(K + 1));
        for (int k = 0; k <= K; ++k) y(c, k) = classes[c].weight * v[static_cast<std::size_t>(k)];
    }
    return y;
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace testing_util
