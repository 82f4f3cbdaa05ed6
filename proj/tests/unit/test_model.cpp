#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "bikeshare/model.hpp"
#include "helpers.hpp"

using namespace bikeshare;
using testing_util::max_abs;
using testing_util::random_measure;

namespace {

// 4x4 matrix of drift partials for K = 3 and mu = 1, entry by entry as
// printed for the K = 3 diffusion system.
Eigen::Matrix4d hand_A(const Eigen::Vector4d& y, double gt, double lt) {
    Eigen::Matrix4d A;
    A << -gt, y(0) + lt, 2 * y(0), 3 * y(0),
         gt, y(1) - y(0) - gt - lt, 2 * (y(1) - y(0)) + lt, 3 * (y(1) - y(0)),
         0, y(2) - y(1) + gt, 2 * (y(2) - y(1)) - gt - lt, 3 * (y(2) - y(1)) + lt,
         0, -y(2), -2 * y(2) + gt, -3 * y(2) - lt;
    return A;
}

Eigen::Matrix4d hand_B(const Eigen::Vector4d& y, double gt, double lt) {
    Eigen::Matrix4d B = Eigen::Matrix4d::Zero();
    for (int i = 0; i <= 3; ++i)
        B(i, i) = lt * ((i < 3 ? y(i + 1) : 0.0) + (i > 0 ? y(i) : 0.0)) +
                  gt * ((i < 3 ? y(i) : 0.0) + (i > 0 ? y(i - 1) : 0.0));
    for (int i = 0; i < 3; ++i) B(i, i + 1) = B(i + 1, i) = -lt * y(i + 1) - gt * y(i);
    return B;
}

}  // namespace

TEST(Drift, K1AllEmpty) {
    const auto p = ModelParams::homogeneous(10, 7, 1, 1.0);
    const std::vector<double> y{1.0, 0.0};
    const Eigen::VectorXd b = drift(EmpiricalMeasure::from_proportions(y), p, 0.0);
    EXPECT_DOUBLE_EQ(b[0], -0.7);
    EXPECT_DOUBLE_EQ(b[1], 0.7);
}

TEST(Drift, K3HandEvaluation) {
    const auto p = ModelParams::homogeneous(100, 150, 3, 1.0);
    const std::vector<double> y{0.0, 0.5, 0.5, 0.0};
    const Eigen::VectorXd b = drift(EmpiricalMeasure::from_proportions(y), p, 0.0);
    EXPECT_NEAR(b[0], 0.5, 1e-15);
    EXPECT_NEAR(b[1], 0.0, 1e-15);
    EXPECT_NEAR(b[2], -0.5, 1e-15);
    EXPECT_NEAR(b[3], 0.0, 1e-15);
}

TEST(Drift, ConservesMassPerClass) {
    Rng rng(11);
    auto p = ModelParams::homogeneous(40, 90, 5, 1.3, 0.7);
    p.classes = {{1.0, 0.3}, {0.6, 0.45}, {0.25, 0.25}};
    p.validate();
    for (int trial = 0; trial < 100; ++trial) {
        const auto y = random_measure(rng, 5, p.classes);
        const EmpiricalMeasure b(y.classes(), 5, drift(y, p, 0.0));
        EXPECT_LE(std::abs(b.vector().sum()), 1e-12);
        for (std::size_t c = 0; c < b.classes(); ++c) EXPECT_LE(std::abs(b.class_mass(c)), 1e-12);
    }
}

TEST(Drift, BoundedOnFeasibleStates) {
    Rng rng(12);
    auto p = ModelParams::homogeneous(50, 400, 8, 2.0, 1.5);
    p.classes = {{1.0, 0.5}, {0.4, 0.5}};
    p.validate();
    int checked = 0;
    while (checked < 100) {
        const auto y = random_measure(rng, 8, p.classes);
        if (y.docked_per_station() > p.gamma()) continue;  // more docked bikes than the fleet
        const auto r = derived_rates(y, p, 0.0);
        const double bound = 2.0 * (r.lambda_tilde + p.travel_rate * p.gamma());
        EXPECT_LE(drift(y, p, 0.0).cwiseAbs().maxCoeff(), bound);
        ++checked;
    }
}

TEST(Drift, AggregatedMatchesSingleClass) {
    Rng rng(13);
    const auto p = ModelParams::homogeneous(30, 45, 4, 0.8, 1.7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto y = random_measure(rng, 4, p.classes);
        const Eigen::VectorXd a = aggregated_drift(y.aggregated(), 0.8, p.gamma(), 1.7);
        EXPECT_LE((a - drift(y, p, 0.0)).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(Jacobian, MatchesHandWrittenK3Matrix) {
    Rng rng(21);
    auto p = ModelParams::homogeneous(100, 150, 3, 1.0);
    p.classes = {{1.0, 0.6}, {0.5, 0.4}};
    p.validate();
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        // occupancy independent of class, as the aggregated form assumes
        const auto v = testing_util::random_simplex(rng, 4);
        const auto y = EmpiricalMeasure::from_proportions(v, p.classes);
        const auto r = derived_rates(y, p, 0.0);
        const Eigen::Vector4d ya = y.aggregated();
        worst = std::max(worst, max_abs(jacobian(y, p, 0.0) - hand_A(ya, r.gamma_tilde, r.lambda_tilde)));
        worst = std::max(worst, max_abs(noise_rate(y, p, 0.0) - hand_B(ya, r.gamma_tilde, r.lambda_tilde)));
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(Jacobian, FirstEntryIsMinusGammaTilde) {
    const auto p = ModelParams::homogeneous(100, 150, 3, 1.0);
    const std::vector<double> y{0.4, 0.3, 0.2, 0.1};
    const auto m = EmpiricalMeasure::from_proportions(y);
    EXPECT_NEAR(jacobian(m, p, 0.0)(0, 0), -derived_rates(m, p, 0.0).gamma_tilde, 1e-15);
}

TEST(Jacobian, FiniteDifferenceAgreement) {
    Rng rng(22);
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        const int K = 1 + static_cast<int>(rng() % 7);
        const double mu = 0.5 + rng.uniform();
        const double lam = 0.2 + 2.0 * rng.uniform();
        const auto p = ModelParams::homogeneous(20, static_cast<std::int64_t>(rng() % (20 * K + 1)), K, lam, mu);
        const auto y = random_measure(rng, K, p.classes);
        const Eigen::MatrixXd A = jacobian(y, p, 0.0);
        double worst = 0.0;
        for (int j = 0; j <= K; ++j) {
            EmpiricalMeasure up = y, dn = y;
            up(0, j) += h;
            dn(0, j) -= h;
            const Eigen::VectorXd col = (drift(up, p, 0.0) - drift(dn, p, 0.0)) / (2.0 * h);
            for (int k = 0; k <= K; ++k)
                worst = std::max(worst, std::abs(col[k] - A(k, j)) / std::max(1.0, std::abs(A(k, j))));
        }
        EXPECT_LE(worst, 1e-5) << "trial " << trial;
    }
}

TEST(Jacobian, ColumnsSumToZero) {
    Rng rng(23);
    const auto p = ModelParams::homogeneous(10, 25, 6, 1.4, 0.9);
    for (int trial = 0; trial < 50; ++trial) {
        const auto A = jacobian(random_measure(rng, 6, p.classes), p, 0.0);
        EXPECT_LE(A.colwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(NoiseRate, AllMassAtZero) {
    const auto p = ModelParams::homogeneous(100, 150, 3, 1.0);
    const std::vector<double> y{1.0, 0.0, 0.0, 0.0};
    const Eigen::MatrixXd B = noise_rate(EmpiricalMeasure::from_proportions(y), p, 0.0);
    Eigen::Matrix4d expected = Eigen::Matrix4d::Zero();
    expected(0, 0) = 1.5;
    expected(0, 1) = expected(1, 0) = -1.5;
    expected(1, 1) = 1.5;
    EXPECT_LE(max_abs(B - expected), 1e-15);
}

TEST(NoiseRate, HalfAndHalfState) {
    const auto p = ModelParams::homogeneous(100, 150, 3, 1.0);
    const std::vector<double> y{0.0, 0.5, 0.5, 0.0};
    const Eigen::MatrixXd B = noise_rate(EmpiricalMeasure::from_proportions(y), p, 0.0);
    EXPECT_DOUBLE_EQ(B(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(B(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(B(2, 2), 0.5);
    EXPECT_DOUBLE_EQ(B(3, 3), 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
}

TEST(NoiseRate, SymmetricTridiagonalPsdZeroRows) {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const int K = 1 + static_cast<int>(rng() % 9);
        const auto p = ModelParams::homogeneous(10, static_cast<std::int64_t>(rng() % (10 * K + 1)), K,
                                                0.3 + rng.uniform(), 0.5 + rng.uniform());
        auto y = random_measure(rng, K, p.classes);
        // keep gamma_tilde >= 0 so every bracket rate is a genuine intensity
        if (y.docked_per_station() > p.gamma()) continue;
        const Eigen::MatrixXd B = noise_rate(y, p, 0.0);
        EXPECT_LE(max_abs(B - B.transpose()), 0.0);
        for (int i = 0; i <= K; ++i)
            for (int j = 0; j <= K; ++j)
                if (std::abs(i - j) > 1) {
                    EXPECT_EQ(B(i, j), 0.0);
                }
        EXPECT_LE(B.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
    }
}

TEST(NonStationary, RateEntersThroughLambda) {
    auto p = ModelParams::homogeneous(100, 150, 3, 1.0);
    p.demand = SinusoidalDemand{1.0, 0.5, 0.5};
    const std::vector<double> y{0.1, 0.4, 0.3, 0.2};
    const auto m = EmpiricalMeasure::from_proportions(y);
    const double t = 2.0;
    const double lam = 1.0 + 0.5 * std::sin(0.5 * t);
    EXPECT_DOUBLE_EQ(derived_rates(m, p, t).lambda_tilde, lam);
    const auto q = ModelParams::homogeneous(100, 150, 3, lam);
    EXPECT_LE((drift(m, p, t) - drift(m, q, 0.0)).cwiseAbs().maxCoeff(), 0.0);
}
