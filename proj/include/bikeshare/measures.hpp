#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bikeshare/covariance.hpp"
#include "bikeshare/ctmc.hpp"
#include "bikeshare/empirical_measure.hpp"
#include "bikeshare/errors.hpp"
#include "bikeshare/mean_field.hpp"
#include "bikeshare/params.hpp"
#include "bikeshare/rk4.hpp"

namespace bikeshare {

/// Bikes in circulation C_t = M - N * sum_j j * Y_t(j) over a time grid.
struct CirculationSeries {
    std::vector<double> times;
    std::vector<double> mean;
    std::vector<double> variance;
    std::vector<double> lo;  // mean - 2 sd
    std::vector<double> hi;  // mean + 2 sd

    void push(double t, double m, double v) {
        const double sd = std::sqrt(std::max(v, 0.0));
        times.push_back(t);
        mean.push_back(m);
        variance.push_back(v);
        lo.push_back(m - 2.0 * sd);
        hi.push_back(m + 2.0 * sd);
    }
};

/// N * j^T Sigma j with j = (0, 1, ..., K).
inline double circulation_variance(const Eigen::MatrixXd& cov, double stations) {
    const Eigen::VectorXd j = Eigen::VectorXd::LinSpaced(cov.rows(), 0.0, static_cast<double>(cov.rows() - 1));
    return stations * j.dot(cov * j);
}

/// Mean-field circulation N(gamma - sum_j j y_t(j)) with the diffusion variance.
inline CirculationSeries circulation(const Trajectory<EmpiricalMeasure>& mf,
                                     const Trajectory<CovarianceState>& cov, const ModelParams& p) {
    if (mf.times.size() != cov.times.size())
        throw AlignmentError("circulation: mean-field and covariance grids differ in length");
    const double N = static_cast<double>(p.stations);
    CirculationSeries out;
    for (std::size_t g = 0; g < mf.times.size(); ++g) {
        if (std::abs(mf.times[g] - cov.times[g]) > 1e-9)
            throw AlignmentError("circulation: grids differ at index " + std::to_string(g));
        const double m = N * (p.gamma() - mf.states[g].docked_per_station());
        out.push(mf.times[g], m, circulation_variance(cov.states[g].cov, N));
    }
    return out;
}

/// Simulated circulation from replicated statistics.
inline CirculationSeries circulation(const SimStats& sim) {
    CirculationSeries out;
    for (std::size_t g = 0; g < sim.times.size(); ++g)
        out.push(sim.times[g], sim.circulation_mean[g], sim.circulation_variance[g]);
    return out;
}

/// Initial measure with every station at floor(min(gamma, K)) bikes.
inline EmpiricalMeasure default_initial_measure(const ModelParams& p) {
    const int k0 = static_cast<int>(std::floor(std::min(p.gamma(), static_cast<double>(p.capacity))));
    std::vector<double> y(static_cast<std::size_t>(p.capacity + 1), 0.0);
    y[static_cast<std::size_t>(k0)] = 1.0;
    return EmpiricalMeasure::from_proportions(y, p.classes);
}

/// Equilibrium average docked bikes per station, sum_n n y*(n), for each
/// stationary arrival rate in `rates`.
inline std::vector<std::pair<double, double>> avg_bikes_vs_lambda(const ModelParams& templ,
                                                                  std::span<const double> rates,
                                                                  const EquilibriumOptions& opt = {}) {
    std::vector<std::pair<double, double>> out;
    out.reserve(rates.size());
    for (double lam : rates) {
        ModelParams p = templ;
        p.demand = StationaryDemand{lam};
        p.validate();
        const EmpiricalMeasure eq = equilibrium(p, default_initial_measure(p), opt);
        out.emplace_back(lam, eq.docked_per_station());
    }
    return out;
}

struct DistributionStats {
    double mean = 0.0;
    int median = 0;  // smallest k with CDF >= 0.5
    double skew_indicator = 0.0;  // mean - median; > 0 right-skewed, < 0 left-skewed
};

inline DistributionStats distribution_stats(const EmpiricalMeasure& y) {
    const Eigen::VectorXd ya = y.aggregated();
    DistributionStats s;
    double cdf = 0.0;
    bool found = false;
    for (int k = 0; k < ya.size(); ++k) {
        s.mean += k * ya[k];
        cdf += ya[k];
        if (!found && cdf >= 0.5 - 1e-12) {
            s.median = k;
            found = true;
        }
    }
    s.skew_indicator = s.mean - s.median;
    return s;
}

enum class Extremum { Max, Min };

inline const char* to_string(Extremum e) { return e == Extremum::Max ? "max" : "min"; }

/// How extrema of the series are paired with extrema of the demand.
enum class Association {
    Positive,  // demand max <-> series max
    Negative,  // demand max <-> series min
};

struct LagEntry {
    Extremum demand_extremum = Extremum::Max;
    double demand_time = 0.0;
    double series_time = 0.0;
    double lag = 0.0;
};

struct LagReport {
    int series_k = 0;
    double travel_rate = 1.0;
    std::vector<LagEntry> entries;
    /// Demand extremum times whose window had no interior series extremum.
    std::vector<double> windows_without_extremum;
};

struct LagOptions {
    double burn_in = 5.0;
    Association association = Association::Positive;
    int series_k = 0;
    double travel_rate = 1.0;
};

/// Times of demand extrema in (after, until] for sinusoidal demand.
inline std::vector<std::pair<double, Extremum>> demand_extrema(const SinusoidalDemand& d, double after,
                                                               double until) {
    const double pi = std::numbers::pi;
    const bool flipped = d.amplitude < 0.0;
    std::vector<std::pair<double, Extremum>> out;
    const double half = pi / d.angular_frequency;
    // sin(w t) peaks at w t = pi/2 + 2 pi m and bottoms at 3 pi/2 + 2 pi m
    const double first = 0.5 * pi / d.angular_frequency;
    auto m = static_cast<long>(std::floor((after - first) / half));
    for (;; ++m) {
        const double t = first + static_cast<double>(m) * half;
        if (t <= after) continue;
        if (t > until) break;
        const bool is_peak = (((m % 2) + 2) % 2 == 0) != flipped;
        out.emplace_back(t, is_peak ? Extremum::Max : Extremum::Min);
    }
    return out;
}

/// Lags between demand extrema and the matching extrema of `values`.
///
/// For each demand extremum after burn-in, the first local extremum of the
/// paired type in [t_e - dt/2, t_e + period] is located on the grid and
/// refined by a three-point parabola. The lag is its time minus t_e.
inline LagReport lag_analysis(std::span<const double> times, std::span<const double> values,
                              const Demand& demand, const LagOptions& opt) {
    const SinusoidalDemand* d = demand.sinusoid();
    if (d == nullptr) throw ParameterError("lag_analysis requires sinusoidal demand");
    if (times.size() != values.size() || times.size() < 3)
        throw AlignmentError("lag_analysis: need matching times and values (>= 3 points)");
    const double period = 2.0 * std::numbers::pi / d->angular_frequency;
    if (times.back() - opt.burn_in < 2.0 * period)
        throw ParameterError("lag_analysis: series must cover two demand periods after burn-in");

    LagReport rep;
    rep.series_k = opt.series_k;
    rep.travel_rate = opt.travel_rate;
    const double last_window_start = times.back() - period;
    for (const auto& [te, kind] : demand_extrema(*d, opt.burn_in, last_window_start)) {
        const bool want_max = (kind == Extremum::Max) == (opt.association == Association::Positive);
        const auto lo_it = std::lower_bound(times.begin(), times.end(), te);
        std::size_t i = static_cast<std::size_t>(lo_it - times.begin());
        if (i > 0 && te - times[i - 1] <= 0.5 * (times[i] - times[i - 1])) --i;
        std::optional<double> found;
        for (i = std::max<std::size_t>(i, 1); i + 1 < times.size() && times[i] <= te + period; ++i) {
            const double a = values[i - 1], b = values[i], c = values[i + 1];
            const bool hit = want_max ? (b > a && b >= c) : (b < a && b <= c);
            if (!hit) continue;
            const double denom = a - 2.0 * b + c;
            const double h = 0.5 * (times[i + 1] - times[i - 1]);
            const double shift = denom != 0.0 ? 0.5 * (a - c) / denom * h : 0.0;
            found = times[i] + shift;
            break;
        }
        if (!found) {
            rep.windows_without_extremum.push_back(te);
            continue;
        }
        rep.entries.push_back({kind, te, *found, *found - te});
    }
    return rep;
}

/// Pearson correlation of values(t) with demand(t - lag) over t > burn_in.
inline double lagged_correlation(std::span<const double> times, std::span<const double> values,
                                 const Demand& demand, double lag, double burn_in) {
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    double n = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] <= burn_in) continue;
        const double x = values[i];
        const double y = demand.rate_at(times[i] - lag);
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        n += 1;
    }
    if (n < 2) throw ParameterError("lagged_correlation: fewer than two points after burn-in");
    const double cov = sxy / n - (sx / n) * (sy / n);
    const double vx = sxx / n - (sx / n) * (sx / n);
    const double vy = syy / n - (sy / n) * (sy / n);
    if (vx <= 0.0 || vy <= 0.0) return 0.0;
    return cov / std::sqrt(vx * vy);
}

/// Lag in [-max_lag, max_lag] (scanned at `resolution`) maximizing lagged_correlation.
inline double best_correlation_lag(std::span<const double> times, std::span<const double> values,
                                   const Demand& demand, double burn_in, double max_lag,
                                   double resolution) {
    double best = -2.0;
    double best_lag = 0.0;
    const auto steps = static_cast<long>(std::floor(max_lag / resolution + 1e-9));
    for (long s = -steps; s <= steps; ++s) {
        const double lag = static_cast<double>(s) * resolution;
        const double r = lagged_correlation(times, values, demand, lag, burn_in);
        if (r > best) {
            best = r;
            best_lag = lag;
        }
    }
    return best_lag;
}

}  // namespace bikeshare
