#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "bikeshare/ctmc.hpp"
#include "bikeshare/exact.hpp"

using namespace bikeshare;
using namespace bikeshare::exact;

namespace {

TinyModel tiny(int n, std::int64_t m, int k) {
    TinyModel t;
    t.stations = n;
    t.fleet = m;
    t.capacity = k;
    t.travel_rate = 1.0;
    t.station_rates.assign(static_cast<std::size_t>(n), 1.0);
    return t;
}

}  // namespace

TEST(StateSpace, EnumerationCompleteAndUnique) {
    const TinyStateSpace s(3, 2, 4);
    EXPECT_EQ(static_cast<double>(s.size()), count_states(3, 2, 4));
    // brute-force count over {0,1,2}^3 with sum <= 4
    int brute = 0;
    for (int a = 0; a <= 2; ++a)
        for (int b = 0; b <= 2; ++b)
            for (int c = 0; c <= 2; ++c)
                if (a + b + c <= 4) ++brute;
    EXPECT_EQ(static_cast<int>(s.size()), brute);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s.index_of(s.state(i)), i);
}

TEST(StateSpace, GuardTrips) {
    EXPECT_THROW(TinyStateSpace(12, 5, 60), CapacityError);
}

TEST(Generator, TwoStateToggle) {
    const auto m = tiny(1, 1, 1);
    const TinyStateSpace s(1, 1, 1);
    const Eigen::MatrixXd Q = Eigen::MatrixXd(build_generator(m, s));
    Eigen::MatrixXd expected(2, 2);
    expected << -1, 1, 1, -1;
    EXPECT_EQ(Q, expected);
}

TEST(Generator, TwoStationsOneBike) {
    const auto m = tiny(2, 1, 1);
    const TinyStateSpace s(2, 1, 1);
    ASSERT_EQ(s.size(), 3u);
    const Eigen::MatrixXd Q = Eigen::MatrixXd(build_generator(m, s));
    const auto i00 = s.index_of({0, 0}), i10 = s.index_of({1, 0}), i01 = s.index_of({0, 1});
    EXPECT_DOUBLE_EQ(Q(i00, i10), 0.5);
    EXPECT_DOUBLE_EQ(Q(i00, i01), 0.5);
    EXPECT_DOUBLE_EQ(Q(i10, i00), 1.0);
    EXPECT_DOUBLE_EQ(Q(i10, i01), 0.0);
}

TEST(Generator, RowsSumToZero) {
    auto m = tiny(3, 4, 2);
    m.station_rates = {0.5, 1.0, 2.0};
    m.travel_rate = 1.3;
    const TinyStateSpace s(3, 2, 4);
    const Eigen::MatrixXd Q = Eigen::MatrixXd(build_generator(m, s));
    EXPECT_LE(Q.rowwise().sum().cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Generator, FromParamsExpandsClasses) {
    auto p = ModelParams::homogeneous(4, 3, 2, 1.0);
    p.classes = {{1.0, 0.5}, {0.5, 0.5}};
    const auto m = TinyModel::from_params(p);
    EXPECT_EQ(m.station_rates, (std::vector<double>{1.0, 1.0, 2.0, 2.0}));
}

TEST(Transient, TwoStateClosedForm) {
    const TinyStateSpace s(1, 1, 1);
    const auto Q = build_generator(tiny(1, 1, 1), s);
    const Eigen::VectorXd p = transient(Q, point_mass(s, {1}), 1.0);
    EXPECT_NEAR(p[static_cast<Eigen::Index>(s.index_of({1}))], 0.5 + 0.5 * std::exp(-2.0), 1e-10);
    EXPECT_NEAR(0.5 + 0.5 * std::exp(-2.0), 0.567668, 1e-6);
}

TEST(Transient, TimeZeroIsIdentity) {
    const TinyStateSpace s(2, 2, 2);
    const auto Q = build_generator(tiny(2, 2, 2), s);
    const Eigen::VectorXd p0 = point_mass(s, {1, 1});
    EXPECT_EQ(transient(Q, p0, 0.0), p0);
}

TEST(Transient, ConservesProbability) {
    auto m = tiny(3, 4, 2);
    m.station_rates = {0.5, 1.0, 2.0};
    const TinyStateSpace s(3, 2, 4);
    const auto Q = build_generator(m, s);
    for (double t : {0.3, 1.0, 5.0}) {
        const Eigen::VectorXd p = transient(Q, point_mass(s, {2, 2, 0}), t);
        EXPECT_NEAR(p.sum(), 1.0, 1e-10);
        EXPECT_GE(p.minCoeff(), -1e-12);
    }
}

TEST(Transient, LongTimeMatchesStationaryVector) {
    auto m = tiny(3, 3, 2);
    m.station_rates = {0.7, 1.0, 1.6};
    const TinyStateSpace s(3, 2, 3);
    const auto Qs = build_generator(m, s);
    const Eigen::MatrixXd Q = Eigen::MatrixXd(Qs);
    // null space of Q^T
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Q.transpose());
    const Eigen::MatrixXd ker = lu.kernel();
    ASSERT_EQ(ker.cols(), 1);
    const Eigen::VectorXd pi = ker.col(0) / ker.col(0).sum();
    const Eigen::VectorXd p = transient(Qs, point_mass(s, {1, 1, 1}), 100.0);
    EXPECT_LE((p - pi).lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(ExpectedEmpirical, PointMassAndSymmetry) {
    const TinyStateSpace s(3, 5, 15);
    const Eigen::VectorXd e = expected_empirical(point_mass(s, {5, 5, 5}), s);
    EXPECT_DOUBLE_EQ(e[5], 1.0);
    EXPECT_DOUBLE_EQ(e.sum(), 1.0);

    const TinyStateSpace s2(2, 1, 1);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(3);
    u[static_cast<Eigen::Index>(s2.index_of({1, 0}))] = 0.5;
    u[static_cast<Eigen::Index>(s2.index_of({0, 1}))] = 0.5;
    const Eigen::VectorXd e2 = expected_empirical(u, s2);
    EXPECT_DOUBLE_EQ(e2[0], 0.5);
    EXPECT_DOUBLE_EQ(e2[1], 0.5);
}

TEST(ExpectedEmpirical, AgreesWithSimulationSmall) {
    // N=2, K=2, M=2 starting with every bike docked at one station each
    const TinyStateSpace s(2, 2, 2);
    const auto Q = build_generator(tiny(2, 2, 2), s);
    SimConfig cfg;
    cfg.params = ModelParams::homogeneous(2, 2, 2, 1.0);
    cfg.initial_counts = {{0, 2, 0}};
    cfg.horizon = 2.0;
    cfg.output_dt = 0.5;
    cfg.replications = 4000;
    cfg.master_seed = 77;
    const auto stats = replicate(cfg);
    for (double t : {0.5, 1.0, 2.0}) {
        const Eigen::VectorXd ey = expected_empirical(transient(Q, point_mass(s, {1, 1}), t), s);
        const auto g = static_cast<Eigen::Index>(std::lround(t / 0.5));
        for (int k = 0; k <= 2; ++k) {
            const double se = std::sqrt(stats.variance(g, k) / 4000.0);
            EXPECT_LE(std::abs(stats.mean(g, k) - ey[k]), 3.0 * se + 1e-12) << "t=" << t << " k=" << k;
        }
    }
}
