#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"

#include "bikeshare/cli/config.hpp"
#include "bikeshare/cli/manifest.hpp"
#include "bikeshare/cli/svg.hpp"
#include "bikeshare/covariance.hpp"
#include "bikeshare/csv.hpp"
#include "bikeshare/ctmc.hpp"
#include "bikeshare/ingest.hpp"
#include "bikeshare/mean_field.hpp"
#include "bikeshare/measures.hpp"

namespace bikeshare::cli {

struct RunResult {
    std::filesystem::path dir;
    Manifest manifest;
    std::vector<std::string> warnings;
};

/// Initial measure: explicit proportions, explicit counts, or every station
/// at floor(min(gamma, K)) bikes.
inline EmpiricalMeasure initial_measure(const ExperimentConfig& cfg) {
    const auto& p = cfg.params;
    EmpiricalMeasure y;
    if (cfg.initial_proportions) {
        y = EmpiricalMeasure::from_proportions(*cfg.initial_proportions, p.classes);
    } else if (cfg.initial_counts) {
        const auto& counts = *cfg.initial_counts;
        if (counts.size() != p.class_count())
            throw ConfigError("initial.counts", "need one row per utilization class");
        y = EmpiricalMeasure(p.class_count(), p.capacity);
        for (std::size_t c = 0; c < counts.size(); ++c) {
            if (counts[c].size() != static_cast<std::size_t>(p.capacity + 1))
                throw ConfigError("initial.counts", "each row needs capacity + 1 entries");
            for (int k = 0; k <= p.capacity; ++k)
                y(c, k) = static_cast<double>(counts[c][static_cast<std::size_t>(k)]) / static_cast<double>(p.stations);
        }
    } else {
        y = default_initial_measure(p);
    }
    try {
        y.validate(p.classes, 1e-9);
    } catch (const ParameterError& e) {
        throw ConfigError("initial", e.what());
    }
    if (y.docked_per_station() > p.gamma() + 1e-12)
        throw ConfigError("initial", "initially docked bikes exceed the fleet");
    return y;
}

inline SimConfig sim_config(const ExperimentConfig& cfg) {
    SimConfig s;
    s.params = cfg.params;
    s.horizon = cfg.horizon;
    s.output_dt = cfg.output_dt;
    s.replications = cfg.replications;
    s.master_seed = cfg.seed;
    s.threads = cfg.threads;
    const char* field = cfg.initial_counts ? "initial.counts" : "initial.proportions";
    try {
        if (cfg.initial_counts) {
            s.initial_counts = *cfg.initial_counts;
        } else {
            const EmpiricalMeasure y = initial_measure(cfg);
            const Eigen::VectorXd agg = y.aggregated();
            const std::vector<double> v(agg.data(), agg.data() + agg.size());
            s.initial_counts = counts_from_proportions(cfg.params, v);
        }
        s.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const ParameterError& e) {
        throw ConfigError(field, e.what());
    }
    return s;
}

inline TimeGrid time_grid(const ExperimentConfig& cfg) { return TimeGrid{cfg.horizon, cfg.step, cfg.output_dt}; }

inline std::vector<int> series_or_all(const std::vector<int>& ks, int K) {
    if (!ks.empty()) return ks;
    std::vector<int> all(static_cast<std::size_t>(K + 1));
    for (int k = 0; k <= K; ++k) all[static_cast<std::size_t>(k)] = k;
    return all;
}

inline csv::Table meanfield_table(const Trajectory<EmpiricalMeasure>& mf) {
    csv::Table t;
    t.header.push_back("t");
    const int K = mf.states.front().capacity();
    for (int k = 0; k <= K; ++k) t.header.push_back("y" + std::to_string(k));
    for (std::size_t g = 0; g < mf.size(); ++g) {
        std::vector<double> row{mf.times[g]};
        for (int k = 0; k <= K; ++k) row.push_back(mf.states[g].aggregate(k));
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline csv::Table diffusion_table(const Trajectory<CovarianceState>& cov) {
    csv::Table t;
    t.header.push_back("t");
    const Eigen::Index n = cov.states.front().cov.rows();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) t.header.push_back("s" + std::to_string(i) + "_" + std::to_string(j));
    for (std::size_t g = 0; g < cov.size(); ++g) {
        std::vector<double> row{cov.times[g]};
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i; j < n; ++j) row.push_back(cov.states[g].cov(i, j));
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline csv::Table circulation_table(const CirculationSeries& c) {
    csv::Table t;
    t.header = {"t", "mean", "var", "lo", "hi"};
    for (std::size_t g = 0; g < c.times.size(); ++g)
        t.rows.push_back({c.times[g], c.mean[g], c.variance[g], c.lo[g], c.hi[g]});
    return t;
}

inline csv::Table simulate_table(const SimStats& s) {
    csv::Table t;
    t.header.push_back("t");
    const Eigen::Index W = s.mean.cols();
    for (Eigen::Index k = 0; k < W; ++k) t.header.push_back("mean_k" + std::to_string(k));
    for (Eigen::Index k = 0; k < W; ++k) t.header.push_back("var_k" + std::to_string(k));
    for (std::size_t g = 0; g < s.times.size(); ++g) {
        const auto gi = static_cast<Eigen::Index>(g);
        std::vector<double> row{s.times[g]};
        for (Eigen::Index k = 0; k < W; ++k) row.push_back(s.mean(gi, k));
        for (Eigen::Index k = 0; k < W; ++k) row.push_back(s.variance(gi, k));
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Simulated mean with +-2 sd band next to the mean-field value with the
/// diffusion band y +- 2 sqrt(Sigma_kk / N).
inline csv::Table compare_table(const SimStats& s, const Trajectory<EmpiricalMeasure>& mf,
                                const Trajectory<CovarianceState>& cov, int k, double stations) {
    if (s.times.size() != mf.size() || cov.size() != mf.size())
        throw AlignmentError("compare: simulation and mean-field grids differ");
    csv::Table t;
    const std::string ks = std::to_string(k);
    t.header = {"t", "sim_mean_k" + ks, "sim_band_lo", "sim_band_hi", "mf_k" + ks, "diff_band_lo", "diff_band_hi"};
    for (std::size_t g = 0; g < mf.size(); ++g) {
        if (std::abs(s.times[g] - mf.times[g]) > 1e-9) throw AlignmentError("compare: grid times differ");
        const double y = mf.states[g].aggregate(k);
        const double sd = std::sqrt(std::max(cov.states[g].cov(k, k), 0.0) / stations);
        t.rows.push_back({mf.times[g], s.mean(static_cast<Eigen::Index>(g), k), s.band_lo(g, k), s.band_hi(g, k), y,
                          y - 2.0 * sd, y + 2.0 * sd});
    }
    return t;
}

namespace detail {

class ArtifactWriter {
public:
    ArtifactWriter(std::filesystem::path dir, bool svg) : dir_(std::move(dir)), svg_(svg) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw IngestError("cannot create output directory " + dir_.string() + ": " + ec.message());
    }

    void table(const std::string& name, const csv::Table& t, const std::string& title) {
        csv::write_table((dir_ / name).string(), t);
        records_.push_back(record_artifact(dir_, name));
        if (svg_) {
            const std::string svg_name = std::filesystem::path(name).replace_extension(".svg").string();
            write_svg((dir_ / svg_name).string(), t, title);
            records_.push_back(record_artifact(dir_, svg_name));
        }
    }

    void document(const std::string& name, const nlohmann::json& j) {
        std::ofstream os(dir_ / name, std::ios::binary);
        if (!os) throw IngestError("cannot write " + (dir_ / name).string());
        os << j.dump(2) << '\n';
        os.close();
        records_.push_back(record_artifact(dir_, name));
    }

    const std::filesystem::path& dir() const { return dir_; }
    std::vector<ArtifactRecord>& records() { return records_; }

private:
    std::filesystem::path dir_;
    bool svg_;
    std::vector<ArtifactRecord> records_;
};

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    const double vx = sxx / n - sx * sx / n / n, vy = syy / n - sy * sy / n / n;
    if (vx <= 0 || vy <= 0) return 0.0;
    return (sxy / n - sx * sy / n / n) / std::sqrt(vx * vy);
}

/// Sign of the strongest lagged correlation with demand over lags in
/// [0, half a period]; decides how extrema are paired.
inline Association infer_association(const std::vector<double>& times, const std::vector<double>& values,
                                     const Demand& demand, double burn_in) {
    const SinusoidalDemand* s = demand.sinusoid();
    const double half = std::numbers::pi / s->angular_frequency;
    double best = 0.0;
    const double dt = times.size() > 1 ? times[1] - times[0] : 0.1;
    for (double lag = 0.0; lag <= half + 1e-12; lag += dt) {
        const double r = lagged_correlation(times, values, demand, lag, burn_in);
        if (std::abs(r) > std::abs(best)) best = r;
    }
    return best >= 0.0 ? Association::Positive : Association::Negative;
}

inline void run_sweep(const ExperimentConfig& cfg, ArtifactWriter& out) {
    csv::Table t;
    t.header = {cfg.sweep.parameter, "avg_docked", "circulation", "mean", "median", "skew_indicator", "y_empty",
                "y_full"};
    for (double v : cfg.sweep.values) {
        ModelParams p = cfg.params;
        if (cfg.sweep.parameter == "lambda") {
            p.demand = StationaryDemand{v};
        } else if (cfg.sweep.parameter == "mu") {
            p.travel_rate = v;
        } else {
            const double m = v * static_cast<double>(p.stations);
            if (std::abs(m - std::round(m)) > 1e-9)
                throw ConfigError("sweep.values", "gamma * stations must be an integer");
            p.fleet = static_cast<std::int64_t>(std::llround(m));
        }
        p.validate();
        const EmpiricalMeasure eq = equilibrium(p, default_initial_measure(p));
        const auto st = distribution_stats(eq);
        t.rows.push_back({v, eq.docked_per_station(),
                          static_cast<double>(p.stations) * (p.gamma() - eq.docked_per_station()), st.mean,
                          static_cast<double>(st.median), st.skew_indicator, eq.aggregate(0),
                          eq.aggregate(p.capacity)});
    }
    out.table("sweep.csv", t, "equilibrium vs " + cfg.sweep.parameter);
}

inline void run_lag(const ExperimentConfig& cfg, ArtifactWriter& out, std::vector<std::string>& warnings) {
    const auto mus = cfg.lag.travel_rates.empty() ? std::vector<double>{cfg.params.travel_rate} : cfg.lag.travel_rates;
    const auto ks = cfg.lag.series_k.empty() ? std::vector<int>{0, cfg.params.capacity} : cfg.lag.series_k;
    csv::Table t;
    t.header = {"mu", "series_k", "extremum_type", "lambda_time", "series_time", "lag"};
    csv::Table series;
    series.header.push_back("t");
    for (double mu : mus)
        for (int k : ks) series.header.push_back("mu" + csv::format_double(mu) + "_k" + std::to_string(k));
    std::vector<std::vector<double>> columns;

    for (double mu : mus) {
        ExperimentConfig c = cfg;
        c.params.travel_rate = mu;
        std::vector<double> times;
        std::vector<std::vector<double>> values(ks.size());
        if (cfg.lag.source == "simulation") {
            const SimStats s = replicate(sim_config(c));
            times = s.times;
            for (std::size_t i = 0; i < ks.size(); ++i)
                for (std::size_t g = 0; g < s.times.size(); ++g)
                    values[i].push_back(s.mean(static_cast<Eigen::Index>(g), ks[i]));
        } else {
            const auto mf = solve_mean_field(c.params, initial_measure(c), time_grid(c));
            times = mf.times;
            for (std::size_t i = 0; i < ks.size(); ++i)
                for (const auto& st : mf.states) values[i].push_back(st.aggregate(ks[i]));
        }
        if (series.rows.empty())
            for (double tt : times) series.rows.push_back({tt});
        for (std::size_t i = 0; i < ks.size(); ++i) {
            for (std::size_t g = 0; g < times.size(); ++g) series.rows[g].push_back(values[i][g]);
            LagOptions opt;
            opt.burn_in = cfg.lag.burn_in;
            opt.series_k = ks[i];
            opt.travel_rate = mu;
            opt.association = infer_association(times, values[i], c.params.demand, opt.burn_in);
            const LagReport rep = lag_analysis(times, values[i], c.params.demand, opt);
            for (const auto& e : rep.entries)
                t.rows.push_back({mu, static_cast<double>(ks[i]), e.demand_extremum == Extremum::Max ? 1.0 : 0.0,
                                  e.demand_time, e.series_time, e.lag});
            for (double te : rep.windows_without_extremum)
                warnings.push_back("lag: mu=" + csv::format_double(mu) + " k=" + std::to_string(ks[i]) +
                                   ": no series extremum in the window after t=" + csv::format_double(te));
        }
    }
    // extremum_type is textual in the CSV; write it by hand
    const auto path = out.dir() / "lag.csv";
    {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IngestError("cannot write " + path.string());
        os << "mu,series_k,extremum_type,lambda_time,series_time,lag\n";
        for (const auto& r : t.rows)
            os << csv::format_double(r[0]) << ',' << static_cast<int>(r[1]) << ',' << (r[2] == 1.0 ? "max" : "min")
               << ',' << csv::format_double(r[3]) << ',' << csv::format_double(r[4]) << ','
               << csv::format_double(r[5]) << '\n';
    }
    out.records().push_back(record_artifact(out.dir(), "lag.csv"));
    out.table("lag_series.csv", series, "series under sinusoidal demand");
}

inline void run_ingest(const ExperimentConfig& cfg, ArtifactWriter& out, std::vector<std::string>& warnings) {
    const auto& spec = cfg.ingest;
    const auto parsed = ingest::parse_trips(spec.path, spec.format);
    if (parsed.skipped > 0) warnings.push_back("ingest: skipped " + std::to_string(parsed.skipped) + " malformed rows");
    if (parsed.records.empty()) throw IngestError("ingest: no valid trip records in " + spec.path);

    ingest::BinOptions bo;
    bo.bin_seconds = spec.bin_seconds;
    bo.fold_weeks = spec.fold_weeks;
    const auto profile = ingest::binned_rates(parsed.records, bo);
    out.table("profile.csv", profile.to_table(), "trip starts and ends per bin");

    const auto ds = ingest::duration_stats(parsed.records, spec.histogram_bin_seconds);
    csv::Table hist;
    hist.header = {"bin_start_seconds", "count"};
    for (std::size_t i = 0; i < ds.histogram.size(); ++i)
        hist.rows.push_back({static_cast<double>(i) * ds.histogram_bin_width, static_cast<double>(ds.histogram[i])});
    out.table("durations.csv", hist, "trip duration histogram");

    std::vector<double> times, rates;
    const double scale = spec.time_unit_seconds / spec.bin_seconds;
    for (std::size_t i = 0; i < profile.bin_start.size(); ++i) {
        times.push_back(profile.bin_start[i] / spec.time_unit_seconds);
        rates.push_back(profile.starts[i] * scale);
    }
    nlohmann::json stats;
    stats["records"] = parsed.records.size();
    stats["skipped"] = parsed.skipped;
    stats["duration_mean_seconds"] = ds.mean;
    stats["duration_median_seconds"] = ds.median;
    stats["duration_std_seconds"] = ds.std_dev;
    stats["travel_rate_per_second"] = ds.travel_rate_per_second;
    stats["travel_rate_per_time_unit"] = ds.travel_rate_per_second * spec.time_unit_seconds;
    stats["time_unit_seconds"] = spec.time_unit_seconds;
    try {
        const auto fit = ingest::fit_sinusoid(times, rates, spec.angular_frequency);
        if (fit.amplitude_clamped) warnings.push_back("ingest: fitted amplitude clamped below 1");
        stats["fit"] = {{"base", fit.demand.base},
                        {"amplitude", fit.demand.amplitude},
                        {"angular_frequency", fit.demand.angular_frequency},
                        {"residual_norm", fit.residual_norm},
                        {"amplitude_clamped", fit.amplitude_clamped}};
    } catch (const IngestError& e) {
        warnings.push_back(std::string("ingest: no sinusoid fit: ") + e.what());
        stats["fit"] = nullptr;
    }
    out.document("stats.json", stats);
}

}  // namespace detail

/// SHA-256 of the effective config without the output location.
inline std::string config_hash(const ExperimentConfig& cfg) {
    nlohmann::json j = cfg.source;
    j.erase("out");
    return sha256_hex(j.dump());
}

/// Runs one experiment and writes its artifacts plus run-manifest.json into
/// cfg.out. Identical configurations produce byte-identical files.
inline RunResult run(const ExperimentConfig& cfg) {
    RunResult res;
    res.dir = cfg.out;
    detail::ArtifactWriter out(res.dir, cfg.svg);
    const auto& p = cfg.params;
    const double N = static_cast<double>(p.stations);

    switch (cfg.kind) {
    case Kind::Simulate: {
        const SimStats s = replicate(sim_config(cfg));
        out.table("simulate.csv", simulate_table(s), "replicated occupancy proportions");
        out.table("circulation_sim.csv", circulation_table(circulation(s)), "bikes in circulation (simulation)");
        break;
    }
    case Kind::MeanField: {
        const auto mf = solve_mean_field(p, initial_measure(cfg), time_grid(cfg));
        out.table("meanfield.csv", meanfield_table(mf), "mean-field occupancy");
        break;
    }
    case Kind::Diffusion: {
        const auto mf = solve_mean_field(p, initial_measure(cfg), time_grid(cfg));
        const auto cov = solve_covariance(p, mf, cfg.step);
        out.table("meanfield.csv", meanfield_table(mf), "mean-field occupancy");
        out.table("diffusion.csv", diffusion_table(cov), "diffusion covariance");
        out.table("circulation.csv", circulation_table(circulation(mf, cov, p)), "bikes in circulation");
        break;
    }
    case Kind::Compare: {
        const SimConfig sc = sim_config(cfg);
        const SimStats s = replicate(sc);
        const auto mf = solve_mean_field(p, initial_measure(cfg), time_grid(cfg));
        const auto cov = solve_covariance(p, mf, cfg.step);
        for (int k : series_or_all(cfg.series_k, p.capacity))
            out.table("compare_k" + std::to_string(k) + ".csv", compare_table(s, mf, cov, k, N),
                      "simulation vs limits, k=" + std::to_string(k));
        out.table("circulation.csv", circulation_table(circulation(mf, cov, p)), "bikes in circulation");
        out.table("circulation_sim.csv", circulation_table(circulation(s)), "bikes in circulation (simulation)");
        break;
    }
    case Kind::Equilibrium: {
        const EmpiricalMeasure eq = equilibrium(p, initial_measure(cfg));
        csv::Table t;
        t.header = {"k", "y"};
        for (int k = 0; k <= p.capacity; ++k) t.rows.push_back({static_cast<double>(k), eq.aggregate(k)});
        out.table("equilibrium.csv", t, "equilibrium occupancy distribution");
        const auto st = distribution_stats(eq);
        nlohmann::json j;
        j["mean"] = st.mean;
        j["median"] = st.median;
        j["skew_indicator"] = st.skew_indicator;
        j["circulation"] = N * (p.gamma() - eq.docked_per_station());
        j["drift_sup_norm"] = drift(eq, p, 0.0).lpNorm<Eigen::Infinity>();
        out.document("equilibrium.json", j);
        break;
    }
    case Kind::Sweep:
        detail::run_sweep(cfg, out);
        break;
    case Kind::Lag:
        detail::run_lag(cfg, out, res.warnings);
        break;
    case Kind::Ingest:
        detail::run_ingest(cfg, out, res.warnings);
        break;
    }

    res.manifest.kind = to_string(cfg.kind);
    res.manifest.config_sha256 = config_hash(cfg);
    res.manifest.seed = cfg.seed;
    res.manifest.artifacts = out.records();
    res.manifest.write(res.dir);
    return res;
}

}  // namespace bikeshare::cli
