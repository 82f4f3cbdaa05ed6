#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "bikeshare/empirical_measure.hpp"
#include "bikeshare/errors.hpp"
#include "bikeshare/model.hpp"
#include "bikeshare/params.hpp"
#include "bikeshare/random.hpp"
#include "bikeshare/rk4.hpp"

namespace bikeshare {

/// Station counts indexed [class][bikes].
using StationCounts = std::vector<std::vector<std::int64_t>>;

/// Replicated simulation of the empirical-measure chain.
struct SimConfig {
    ModelParams params;
    StationCounts initial_counts;
    double horizon = 20.0;
    double output_dt = 0.1;
    std::size_t replications = 50;
    std::uint64_t master_seed = 1;
    unsigned threads = 1;

    std::int64_t initial_docked() const {
        std::int64_t d = 0;
        for (const auto& row : initial_counts)
            for (std::size_t k = 0; k < row.size(); ++k) d += static_cast<std::int64_t>(k) * row[k];
        return d;
    }

    std::size_t output_count() const {
        return static_cast<std::size_t>(std::floor(horizon / output_dt + 1e-9)) + 1;
    }

    std::vector<double> times() const {
        std::vector<double> ts(output_count());
        for (std::size_t g = 0; g < ts.size(); ++g) ts[g] = static_cast<double>(g) * output_dt;
        return ts;
    }

    void validate() const {
        params.validate();
        if (!(horizon >= 0.0) || !std::isfinite(horizon))
            throw ParameterError("SimConfig: horizon must be non-negative");
        if (!(output_dt > 0.0)) throw ParameterError("SimConfig: output_dt must be positive");
        if (initial_counts.size() != params.class_count())
            throw ParameterError("SimConfig: initial counts need one row per utilization class");
        std::int64_t total = 0;
        for (const auto& row : initial_counts) {
            if (row.size() != static_cast<std::size_t>(params.capacity + 1))
                throw ParameterError("SimConfig: each count row needs K+1 entries");
            for (auto v : row) {
                if (v < 0) throw ParameterError("SimConfig: negative station count");
                total += v;
            }
        }
        if (total != params.stations)
            throw ParameterError("SimConfig: station counts must sum to N");
        if (initial_docked() > params.fleet)
            throw ParameterError("SimConfig: initially docked bikes exceed the fleet size M");
    }
};

/// Converts aggregated proportions y(0..K) into integer counts w_c * N * y(k).
/// Throws when any count is not an integer.
inline StationCounts counts_from_proportions(const ModelParams& p, std::span<const double> y) {
    if (y.size() != static_cast<std::size_t>(p.capacity + 1))
        throw ParameterError("counts_from_proportions: need K+1 proportions");
    StationCounts counts(p.class_count(), std::vector<std::int64_t>(y.size(), 0));
    for (std::size_t c = 0; c < p.class_count(); ++c) {
        for (std::size_t k = 0; k < y.size(); ++k) {
            const double x = p.classes[c].weight * static_cast<double>(p.stations) * y[k];
            const double r = std::round(x);
            if (std::abs(x - r) > 1e-6)
                throw ParameterError("counts_from_proportions: proportion times N is not an integer "
                                     "(class " + std::to_string(c) + ", k = " + std::to_string(k) +
                                     ")");
            counts[c][k] = static_cast<std::int64_t>(r);
        }
    }
    return counts;
}

enum class EventKind { Retrieval, Return };

struct NoEventObserver {
    void operator()(double, EventKind, std::size_t, int) const {}
};

/// Gillespie direct-method simulation of the aggregated count chain, sampled
/// (cadlag) at the sorted `sample_times`.
///
/// From a station in class c holding n bikes, a retrieval fires at rate
/// Lambda(t)/r_c when n > 0 and a return at rate (mu/N)(M - docked) when
/// n < K. Time-varying demand is handled by thinning against its constant
/// upper bound. `observer(t, kind, class, n)` sees every accepted event, with
/// n the occupancy before the event.
template <class Observer = NoEventObserver>
Trajectory<EmpiricalMeasure> simulate_at(const SimConfig& cfg, std::span<const double> sample_times,
                                         std::uint64_t seed, Observer&& observer = {}) {
    const ModelParams& p = cfg.params;
    const std::size_t C = p.class_count();
    const int K = p.capacity;
    const std::size_t width = static_cast<std::size_t>(K + 1);
    const double N = static_cast<double>(p.stations);
    const double per_bike_return = p.travel_rate / N;
    const bool thin = !p.demand.is_stationary();
    const double lam_bound = p.demand.upper_bound();

    std::vector<std::int64_t> counts(C * width);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < width; ++k) counts[c * width + k] = cfg.initial_counts[c][k];
    std::int64_t docked = cfg.initial_docked();

    std::vector<double> retrieval_rate(C);
    for (std::size_t c = 0; c < C; ++c) retrieval_rate[c] = lam_bound / p.classes[c].relative_utilization;

    Trajectory<EmpiricalMeasure> path;
    path.times.assign(sample_times.begin(), sample_times.end());
    path.states.reserve(sample_times.size());
    auto snapshot = [&] {
        EmpiricalMeasure y(C, K);
        for (std::size_t i = 0; i < counts.size(); ++i)
            y.vector()[static_cast<Eigen::Index>(i)] = static_cast<double>(counts[i]) / N;
        path.states.push_back(std::move(y));
    };

    Rng rng(seed);
    // rates[2*i] = retrieval from cell i, rates[2*i+1] = return to cell i
    std::vector<double> rates(2 * counts.size());
    std::size_t next_sample = 0;
    double t = 0.0;
    while (next_sample < sample_times.size()) {
        const double circulating = static_cast<double>(p.fleet - docked);
        double total = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t k = 0; k < width; ++k) {
                const std::size_t i = c * width + k;
                const double cnt = static_cast<double>(counts[i]);
                const double out = k > 0 ? cnt * retrieval_rate[c] : 0.0;
                const double in = k + 1 < width ? cnt * per_bike_return * circulating : 0.0;
                rates[2 * i] = out;
                rates[2 * i + 1] = in;
                total += out + in;
            }
        }
        if (!(total > 0.0)) break;  // absorbing: nothing can happen

        const double t_next = t + rng.exponential(total);
        while (next_sample < sample_times.size() && sample_times[next_sample] < t_next) {
            snapshot();
            ++next_sample;
        }
        if (next_sample == sample_times.size()) break;
        t = t_next;

        const double target = rng.uniform() * total;
        std::size_t pick = rates.size();
        double acc = 0.0;
        for (std::size_t j = 0; j < rates.size(); ++j) {
            if (rates[j] <= 0.0) continue;
            acc += rates[j];
            pick = j;
            if (target < acc) break;
        }
        const std::size_t cell = pick / 2;
        const std::size_t c = cell / width;
        const int n = static_cast<int>(cell % width);
        if (pick % 2 == 0) {
            if (thin && rng.uniform() * lam_bound >= p.demand.rate_at(t)) continue;
            --counts[cell];
            ++counts[cell - 1];
            --docked;
            observer(t, EventKind::Retrieval, c, n);
        } else {
            --counts[cell];
            ++counts[cell + 1];
            ++docked;
            observer(t, EventKind::Return, c, n);
        }
    }
    while (next_sample < sample_times.size()) {
        snapshot();
        ++next_sample;
    }
    return path;
}

/// One realization of Y^N_t on the configured output grid.
template <class Observer = NoEventObserver>
Trajectory<EmpiricalMeasure> simulate_path(const SimConfig& cfg, std::uint64_t seed,
                                           Observer&& observer = {}) {
    cfg.validate();
    const auto ts = cfg.times();
    return simulate_at(cfg, ts, seed, std::forward<Observer>(observer));
}

/// simulate_path for sinusoidal demand; retrievals are thinned against
/// base * (1 + |amplitude|).
template <class Observer = NoEventObserver>
Trajectory<EmpiricalMeasure> simulate_path_nonstationary(const SimConfig& cfg, std::uint64_t seed,
                                                         Observer&& observer = {}) {
    if (cfg.params.demand.sinusoid() == nullptr)
        throw ParameterError("simulate_path_nonstationary: demand must be sinusoidal");
    return simulate_path(cfg, seed, std::forward<Observer>(observer));
}

/// Event times of a Poisson process with intensity demand.rate_at(t) on
/// [0, horizon), generated by thinning a homogeneous process at the
/// demand's upper bound.
inline std::vector<double> thinned_arrivals(const Demand& demand, double horizon, Rng& rng) {
    demand.validate();
    const double bound = demand.upper_bound();
    std::vector<double> out;
    double t = 0.0;
    while (true) {
        t += rng.exponential(bound);
        if (t >= horizon) break;
        if (rng.uniform() * bound < demand.rate_at(t)) out.push_back(t);
    }
    return out;
}

/// Across-replication statistics on the output grid.
struct SimStats {
    std::vector<double> times;
    Eigen::MatrixXd mean;      // [grid][k]
    Eigen::MatrixXd variance;  // unbiased sample variance, [grid][k]
    std::vector<double> circulation_mean;
    std::vector<double> circulation_variance;
    std::size_t replications = 0;

    double band_lo(std::size_t g, int k) const { return mean(g, k) - 2.0 * std::sqrt(variance(g, k)); }
    double band_hi(std::size_t g, int k) const { return mean(g, k) + 2.0 * std::sqrt(variance(g, k)); }
};

namespace detail {

/// Welford accumulator over a fixed-size block of values.
struct RunningMoments {
    std::size_t n = 0;
    Eigen::ArrayXd mean;
    Eigen::ArrayXd m2;

    explicit RunningMoments(Eigen::Index size)
        : mean(Eigen::ArrayXd::Zero(size)), m2(Eigen::ArrayXd::Zero(size)) {}

    void push(const Eigen::ArrayXd& x) {
        ++n;
        const Eigen::ArrayXd delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }

    Eigen::ArrayXd variance() const {
        if (n < 2) return Eigen::ArrayXd::Zero(mean.size());
        return (m2 / static_cast<double>(n - 1)).max(0.0);
    }
};

/// Runs `work(i)` for i in [begin, end) on up to `threads` workers.
template <class Work>
void parallel_for(std::size_t begin, std::size_t end, unsigned threads, Work&& work) {
    const std::size_t count = end - begin;
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), count));
    if (workers <= 1) {
        for (std::size_t i = begin; i < end; ++i) work(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = begin + w; i < end; i += workers) work(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace detail

/// Runs cfg.replications independent paths. Replication i uses
/// stream_seed(master_seed, i) and results are merged in index order, so the
/// output is bit-identical for any thread count.
inline SimStats replicate(const SimConfig& cfg) {
    cfg.validate();
    if (cfg.replications < 2) throw ParameterError("replicate: need at least 2 replications");

    const auto times = cfg.times();
    const std::size_t G = times.size();
    const Eigen::Index width = cfg.params.capacity + 1;
    const double N = static_cast<double>(cfg.params.stations);
    const double M = static_cast<double>(cfg.params.fleet);

    // per replication: G*(K+1) proportions followed by G circulation values
    const Eigen::Index block = static_cast<Eigen::Index>(G) * (width + 1);
    detail::RunningMoments acc(block);

    const std::size_t chunk = 64 * static_cast<std::size_t>(std::max(1u, cfg.threads));
    std::vector<Eigen::ArrayXd> results;
    for (std::size_t start = 0; start < cfg.replications; start += chunk) {
        const std::size_t stop = std::min(cfg.replications, start + chunk);
        results.assign(stop - start, Eigen::ArrayXd());
        detail::parallel_for(start, stop, cfg.threads, [&](std::size_t i) {
            const auto path = simulate_at(cfg, times, stream_seed(cfg.master_seed, i));
            Eigen::ArrayXd row(block);
            for (std::size_t g = 0; g < G; ++g) {
                const Eigen::VectorXd y = path.states[g].aggregated();
                for (Eigen::Index k = 0; k < width; ++k) row[static_cast<Eigen::Index>(g) * width + k] = y[k];
                row[static_cast<Eigen::Index>(G) * width + static_cast<Eigen::Index>(g)] =
                    M - N * path.states[g].docked_per_station();
            }
            results[i - start] = std::move(row);
        });
        for (const auto& r : results) acc.push(r);
    }

    const Eigen::ArrayXd var = acc.variance();
    SimStats s;
    s.times = times;
    s.replications = cfg.replications;
    s.mean.resize(static_cast<Eigen::Index>(G), width);
    s.variance.resize(static_cast<Eigen::Index>(G), width);
    s.circulation_mean.resize(G);
    s.circulation_variance.resize(G);
    for (std::size_t g = 0; g < G; ++g) {
        const auto gi = static_cast<Eigen::Index>(g);
        for (Eigen::Index k = 0; k < width; ++k) {
            s.mean(gi, k) = acc.mean[gi * width + k];
            s.variance(gi, k) = var[gi * width + k];
        }
        s.circulation_mean[g] = acc.mean[static_cast<Eigen::Index>(G) * width + gi];
        s.circulation_variance[g] = var[static_cast<Eigen::Index>(G) * width + gi];
    }
    return s;
}

/// Both sides of the forward equation for d/dt E[Y_t(k)], estimated from
/// the same ensemble of cfg.replications paths.
struct MomentRateReport {
    double finite_difference = 0.0;  // d/dt of the replicated mean
    double finite_difference_se = 0.0;
    double rate_expression = 0.0;  // Monte-Carlo mean of the generator applied to Y(k)
    double rate_expression_se = 0.0;

    double combined_se() const {
        return std::sqrt(finite_difference_se * finite_difference_se +
                         rate_expression_se * rate_expression_se);
    }
    /// |difference| within three combined standard errors.
    bool agrees() const {
        return std::abs(finite_difference - rate_expression) <= 3.0 * combined_se() + 1e-15;
    }
};

/// The derivative side is a centered difference over [t - window, t + window];
/// when t < window it is the second-order one-sided difference on
/// {t, t + window, t + 2 window}. The rate side averages the drift evaluated
/// at Y_t, which is the exact generator of the coordinate function y -> y(k).
inline MomentRateReport moment_rate_check(const SimConfig& cfg, int k, double t, double window) {
    cfg.validate();
    if (!cfg.params.demand.is_stationary())
        throw ParameterError("moment_rate_check requires stationary demand");
    if (k < 0 || k > cfg.params.capacity) throw ParameterError("moment_rate_check: k out of range");
    if (!(window > 0.0) || t < 0.0) throw ParameterError("moment_rate_check: bad time window");
    if (cfg.replications < 2) throw ParameterError("moment_rate_check: need >= 2 replications");

    const bool centered = t >= window;
    const std::vector<double> ts = centered ? std::vector<double>{t - window, t, t + window}
                                            : std::vector<double>{t, t + window, t + 2.0 * window};
    const std::size_t at_t = centered ? 1 : 0;
    auto derivative = [&](const Trajectory<EmpiricalMeasure>& path) {
        const double y0 = path.states[0].aggregate(k);
        const double y1 = path.states[1].aggregate(k);
        const double y2 = path.states[2].aggregate(k);
        return centered ? (y2 - y0) / (2.0 * window) : (-3.0 * y0 + 4.0 * y1 - y2) / (2.0 * window);
    };

    std::vector<Eigen::ArrayXd> samples(cfg.replications);
    detail::parallel_for(0, cfg.replications, cfg.threads, [&](std::size_t i) {
        const auto path = simulate_at(cfg, ts, stream_seed(cfg.master_seed, i));
        Eigen::ArrayXd row(2);
        row[0] = derivative(path);
        const Eigen::VectorXd b = drift(path.states[at_t], cfg.params, t);
        double bk = 0.0;
        for (std::size_t c = 0; c < cfg.params.class_count(); ++c)
            bk += b[static_cast<Eigen::Index>(c) * (cfg.params.capacity + 1) + k];
        row[1] = bk;
        samples[i] = row;
    });
    detail::RunningMoments acc(2);
    for (const auto& s : samples) acc.push(s);
    const Eigen::ArrayXd var = acc.variance();
    const double R = static_cast<double>(cfg.replications);

    MomentRateReport rep;
    rep.finite_difference = acc.mean[0];
    rep.finite_difference_se = std::sqrt(var[0] / R);
    rep.rate_expression = acc.mean[1];
    rep.rate_expression_se = std::sqrt(var[1] / R);
    return rep;
}

}  // namespace bikeshare
