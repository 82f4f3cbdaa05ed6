#include <gtest/gtest.h>

#include <vector>

#include "bikeshare/errors.hpp"
#include "bikeshare/model.hpp"
#include "bikeshare/params.hpp"

using namespace bikeshare;

TEST(Utilization, HomogeneousRatesGiveOneClass) {
    const std::vector<double> rates(5, 1.0);
    const auto u = utilization_from_rates(rates);
    ASSERT_EQ(u.classes.size(), 1u);
    EXPECT_DOUBLE_EQ(u.classes[0].relative_utilization, 1.0);
    EXPECT_DOUBLE_EQ(u.classes[0].weight, 1.0);
    EXPECT_DOUBLE_EQ(u.min_rate, 1.0);
}

TEST(Utilization, TwoStations) {
    const std::vector<double> rates{1.0, 2.0};
    const auto u = utilization_from_rates(rates);
    ASSERT_EQ(u.classes.size(), 2u);
    EXPECT_DOUBLE_EQ(u.classes[0].relative_utilization, 1.0);
    EXPECT_DOUBLE_EQ(u.classes[0].weight, 0.5);
    EXPECT_DOUBLE_EQ(u.classes[1].relative_utilization, 0.5);
    EXPECT_DOUBLE_EQ(u.classes[1].weight, 0.5);
    EXPECT_DOUBLE_EQ(u.min_rate, 1.0);
}

TEST(Utilization, GroupsEqualRatios) {
    const std::vector<double> rates{2.0, 2.0, 4.0};
    const auto u = utilization_from_rates(rates);
    ASSERT_EQ(u.classes.size(), 2u);
    EXPECT_DOUBLE_EQ(u.classes[0].relative_utilization, 1.0);
    EXPECT_NEAR(u.classes[0].weight, 2.0 / 3.0, 1e-15);
    EXPECT_DOUBLE_EQ(u.classes[1].relative_utilization, 0.5);
    EXPECT_NEAR(u.classes[1].weight, 1.0 / 3.0, 1e-15);
    EXPECT_DOUBLE_EQ(u.min_rate, 2.0);
}

TEST(Utilization, RejectsNonpositiveRate) {
    const std::vector<double> rates{1.0, 0.0};
    EXPECT_THROW(utilization_from_rates(rates), ParameterError);
    const std::vector<double> neg{-1.0};
    EXPECT_THROW(utilization_from_rates(neg), ParameterError);
}

TEST(ModelParamsValidate, RejectsBadFields) {
    EXPECT_THROW(ModelParams::homogeneous(10, 10, 0, 1.0), ParameterError);
    EXPECT_THROW(ModelParams::homogeneous(0, 10, 3, 1.0), ParameterError);
    EXPECT_THROW(ModelParams::homogeneous(10, -1, 3, 1.0), ParameterError);
    EXPECT_THROW(ModelParams::homogeneous(10, 10, 3, 0.0), ParameterError);
    EXPECT_THROW(ModelParams::homogeneous(10, 10, 3, 1.0, 0.0), ParameterError);

    auto p = ModelParams::homogeneous(10, 10, 3, 1.0);
    p.classes = {{1.0, 0.5}, {0.5, 0.4}};
    EXPECT_THROW(p.validate(), ParameterError);
    p.classes = {{0.8, 0.5}, {0.5, 0.5}};
    EXPECT_THROW(p.validate(), ParameterError);
    p.classes = {{1.0, 1.0}};
    p.demand = SinusoidalDemand{1.0, 1.0, 0.5};
    EXPECT_THROW(p.validate(), ParameterError);
    p.demand = SinusoidalDemand{1.0, 0.5, 0.5};
    EXPECT_NO_THROW(p.validate());
}

TEST(ModelParamsValidate, MessageNamesField) {
    try {
        ModelParams::homogeneous(10, 10, 0, 1.0);
        FAIL();
    } catch (const ParameterError& e) {
        EXPECT_NE(std::string(e.what()).find("capacity"), std::string::npos);
    }
}

TEST(Demand, SinusoidRateAndBound) {
    Demand d = SinusoidalDemand{1.0, 0.5, 0.5};
    EXPECT_DOUBLE_EQ(d.rate_at(0.0), 1.0);
    EXPECT_NEAR(d.rate_at(3.14159265358979323846), 1.5, 1e-15);
    EXPECT_DOUBLE_EQ(d.upper_bound(), 1.5);
    EXPECT_FALSE(d.is_stationary());
    Demand s = StationaryDemand{2.0};
    EXPECT_DOUBLE_EQ(s.rate_at(7.0), 2.0);
    EXPECT_EQ(s.sinusoid(), nullptr);
}

TEST(DerivedRates, GammaTildeCancels) {
    const auto p = ModelParams::homogeneous(100, 150, 3, 1.0);
    const std::vector<double> y{0.0, 0.5, 0.5, 0.0};
    const auto r = derived_rates(EmpiricalMeasure::from_proportions(y), p, 0.0);
    EXPECT_DOUBLE_EQ(r.gamma_tilde, 0.0);
    EXPECT_DOUBLE_EQ(r.lambda_tilde, 1.0);
}

TEST(DerivedRates, AllEmptyGivesGamma) {
    const auto p = ModelParams::homogeneous(100, 150, 3, 1.0);
    const std::vector<double> y{1.0, 0.0, 0.0, 0.0};
    EXPECT_DOUBLE_EQ(derived_rates(EmpiricalMeasure::from_proportions(y), p, 0.0).gamma_tilde, 1.5);
}

TEST(DerivedRates, TwoClassLambdaTilde) {
    auto p = ModelParams::homogeneous(100, 150, 3, 1.0);
    p.classes = {{1.0, 0.5}, {0.5, 0.5}};
    p.validate();
    const std::vector<double> y{0.25, 0.25, 0.25, 0.25};
    const auto r = derived_rates(EmpiricalMeasure::from_proportions(y, p.classes), p, 0.0);
    EXPECT_DOUBLE_EQ(r.lambda_tilde, 1.5);
    EXPECT_GE(r.lambda_tilde, 1.0);
    EXPECT_GE(r.gamma_tilde, p.gamma() - 3);
    EXPECT_LE(r.gamma_tilde, p.gamma());
}

TEST(EmpiricalMeasureValidate, DetectsViolations) {
    std::vector<UtilizationClass> one{{1.0, 1.0}};
    const std::vector<double> ok{0.25, 0.75};
    EXPECT_NO_THROW(EmpiricalMeasure::from_proportions(ok).validate(one));
    const std::vector<double> bad_sum{0.25, 0.7};
    EXPECT_THROW(EmpiricalMeasure::from_proportions(bad_sum).validate(one), ParameterError);
    const std::vector<double> neg{-0.25, 1.25};
    EXPECT_THROW(EmpiricalMeasure::from_proportions(neg).validate(one), ParameterError);
    std::vector<UtilizationClass> two{{1.0, 0.5}, {0.5, 0.5}};
    EmpiricalMeasure m(2, 1);
    m(0, 0) = 0.6;
    m(1, 1) = 0.4;
    EXPECT_THROW(m.validate(two), ParameterError);
}
