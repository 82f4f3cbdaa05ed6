#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "bikeshare/errors.hpp"

namespace bikeshare {

/// Constant per-station arrival rate of the least-used station class.
struct StationaryDemand {
    double rate = 1.0;
};

/// lambda(t) = base * (1 + amplitude * sin(angular_frequency * t)).
struct SinusoidalDemand {
    double base = 1.0;
    double amplitude = 0.0;
    double angular_frequency = 1.0;
};

/// Arrival-rate profile of the r = 1 class. Rates of other classes scale as 1/r.
class Demand {
public:
    Demand() = default;
    Demand(StationaryDemand d) : spec_(d) {}
    Demand(SinusoidalDemand d) : spec_(d) {}

    double rate_at(double t) const {
        if (const auto* s = std::get_if<StationaryDemand>(&spec_)) return s->rate;
        const auto& s = std::get<SinusoidalDemand>(spec_);
        return s.base * (1.0 + s.amplitude * std::sin(s.angular_frequency * t));
    }

    /// Constant rate dominating rate_at over all t; used as the thinning bound.
    double upper_bound() const {
        if (const auto* s = std::get_if<StationaryDemand>(&spec_)) return s->rate;
        const auto& s = std::get<SinusoidalDemand>(spec_);
        return s.base * (1.0 + std::abs(s.amplitude));
    }

    bool is_stationary() const { return std::holds_alternative<StationaryDemand>(spec_); }

    const SinusoidalDemand* sinusoid() const { return std::get_if<SinusoidalDemand>(&spec_); }

    void validate() const {
        if (const auto* s = std::get_if<StationaryDemand>(&spec_)) {
            if (!(s->rate > 0.0) || !std::isfinite(s->rate))
                throw ParameterError("demand rate must be positive and finite");
            return;
        }
        const auto& s = std::get<SinusoidalDemand>(spec_);
        if (!(s.base > 0.0) || !std::isfinite(s.base))
            throw ParameterError("sinusoidal demand base must be positive and finite");
        if (!(std::abs(s.amplitude) < 1.0))
            throw ParameterError("sinusoidal demand amplitude must satisfy |amplitude| < 1");
        if (!(s.angular_frequency > 0.0) || !std::isfinite(s.angular_frequency))
            throw ParameterError("sinusoidal demand angular_frequency must be positive");
    }

private:
    std::variant<StationaryDemand, SinusoidalDemand> spec_{StationaryDemand{}};
};

/// Stations sharing a relative utilization r are exchangeable.
struct UtilizationClass {
    double relative_utilization = 1.0;  // r in (0, 1]
    double weight = 1.0;                // fraction of stations in the class
};

struct UtilizationProfile {
    std::vector<UtilizationClass> classes;
    double min_rate = 0.0;  // Lambda
};

/// Groups stations by relative utilization r_i = min_j rate_j / rate_i.
/// Classes are returned in decreasing r, so the r = 1 class comes first.
inline UtilizationProfile utilization_from_rates(std::span<const double> rates) {
    if (rates.empty()) throw ParameterError("utilization_from_rates: no stations");
    for (double r : rates)
        if (!(r > 0.0) || !std::isfinite(r))
            throw ParameterError("utilization_from_rates: station rates must be positive");

    const double lambda_min = *std::min_element(rates.begin(), rates.end());
    std::vector<double> rel(rates.size());
    std::transform(rates.begin(), rates.end(), rel.begin(),
                   [&](double r) { return lambda_min / r; });
    std::sort(rel.begin(), rel.end(), std::greater<>());

    UtilizationProfile out;
    out.min_rate = lambda_min;
    const double n = static_cast<double>(rates.size());
    for (std::size_t i = 0; i < rel.size();) {
        std::size_t j = i;
        while (j < rel.size() && std::abs(rel[j] - rel[i]) <= 1e-12 * rel[i]) ++j;
        out.classes.push_back({rel[i], static_cast<double>(j - i) / n});
        i = j;
    }
    out.classes.front().relative_utilization = 1.0;
    return out;
}

/// Full parameterization of the finite-capacity bike-sharing model.
/// Routing is uniform (P_i = 1/N) and every station has capacity K.
struct ModelParams {
    std::int64_t stations = 1;  // N
    std::int64_t fleet = 0;     // M
    int capacity = 1;           // K
    double travel_rate = 1.0;   // mu
    Demand demand{};
    std::vector<UtilizationClass> classes{UtilizationClass{}};

    static ModelParams homogeneous(std::int64_t n, std::int64_t m, int k, double lambda,
                                   double mu = 1.0) {
        ModelParams p;
        p.stations = n;
        p.fleet = m;
        p.capacity = k;
        p.travel_rate = mu;
        p.demand = StationaryDemand{lambda};
        p.validate();
        return p;
    }

    /// Bikes per station, M / N.
    double gamma() const { return static_cast<double>(fleet) / static_cast<double>(stations); }

    std::size_t class_count() const { return classes.size(); }

    /// Lambda(t): arrival rate of the r = 1 class at time t.
    double base_rate(double t) const { return demand.rate_at(t); }

    /// Per-station arrival rate of class c at time t.
    double class_rate(std::size_t c, double t) const {
        return base_rate(t) / classes[c].relative_utilization;
    }

    void validate() const {
        std::ostringstream err;
        if (stations < 1) err << "stations must be >= 1; ";
        if (fleet < 0) err << "fleet must be >= 0; ";
        if (capacity < 1) err << "capacity must be >= 1; ";
        if (!(travel_rate > 0.0) || !std::isfinite(travel_rate)) err << "travel_rate must be > 0; ";
        if (classes.empty()) err << "at least one utilization class required; ";
        double wsum = 0.0;
        double rmax = 0.0;
        for (const auto& c : classes) {
            if (!(c.relative_utilization > 0.0) || c.relative_utilization > 1.0)
                err << "relative utilization must lie in (0, 1]; ";
            if (!(c.weight >= 0.0)) err << "class weight must be >= 0; ";
            wsum += c.weight;
            rmax = std::max(rmax, c.relative_utilization);
        }
        if (!classes.empty()) {
            if (std::abs(wsum - 1.0) > 1e-12) err << "class weights must sum to 1; ";
            if (rmax != 1.0) err << "largest relative utilization must equal 1; ";
        }
        const std::string msg = err.str();
        if (!msg.empty()) throw ParameterError("ModelParams: " + msg.substr(0, msg.size() - 2));
        demand.validate();
    }
};

}  // namespace bikeshare
