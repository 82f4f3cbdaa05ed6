#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "bikeshare/ctmc.hpp"
#include "bikeshare/errors.hpp"
#include "bikeshare/ingest.hpp"
#include "bikeshare/params.hpp"

namespace bikeshare::cli {

using json = nlohmann::json;

/// Validation failure tied to one configuration field.
class ConfigError : public ParameterError {
public:
    ConfigError(const std::string& field, const std::string& what)
        : ParameterError("config field '" + field + "': " + what), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

enum class Kind { Simulate, MeanField, Diffusion, Compare, Equilibrium, Sweep, Lag, Ingest };

inline const std::vector<std::pair<Kind, const char*>>& kind_names() {
    static const std::vector<std::pair<Kind, const char*>> names{
        {Kind::Simulate, "simulate"}, {Kind::MeanField, "meanfield"}, {Kind::Diffusion, "diffusion"},
        {Kind::Compare, "compare"},   {Kind::Equilibrium, "equilibrium"}, {Kind::Sweep, "sweep"},
        {Kind::Lag, "lag"},           {Kind::Ingest, "ingest"}};
    return names;
}

inline const char* to_string(Kind k) {
    for (const auto& [kind, name] : kind_names())
        if (kind == k) return name;
    return "?";
}

inline std::optional<Kind> parse_kind(const std::string& s) {
    for (const auto& [kind, name] : kind_names())
        if (s == name) return kind;
    return std::nullopt;
}

struct SweepSpec {
    std::string parameter = "lambda";  // lambda | mu | gamma
    std::vector<double> values;
};

struct LagSpec {
    double burn_in = 5.0;
    std::vector<int> series_k;
    std::vector<double> travel_rates;
    std::string source = "meanfield";  // meanfield | simulation
};

struct IngestSpec {
    std::string path;
    ingest::TripFormat format = ingest::TripFormat::citibike();
    double bin_seconds = 300.0;
    bool fold_weeks = true;
    double histogram_bin_seconds = 60.0;
    double time_unit_seconds = 3600.0;
    double angular_frequency = 2.0 * std::numbers::pi / 24.0;  // one cycle per day, in hours
};

struct ExperimentConfig {
    Kind kind = Kind::MeanField;
    ModelParams params;
    std::optional<std::vector<double>> initial_proportions;
    std::optional<StationCounts> initial_counts;
    double horizon = 20.0;
    double step = 0.01;
    double output_dt = 0.1;
    std::size_t replications = 50;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string out = "out";
    bool svg = false;
    std::vector<int> series_k;  // empty: all k
    SweepSpec sweep;
    LagSpec lag;
    IngestSpec ingest;
    json source;  // effective document the run was configured from
};

namespace detail {

class Reader {
public:
    Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "must be an object");
    }

    std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
    bool has(const std::string& key) const {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }
    const json& at(const std::string& key) const {
        seen_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const json& v = at(key);
        if (!v.is_number()) throw ConfigError(path(key), "must be a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(path(key), "must be finite");
        return x;
    }

    std::int64_t integer(const std::string& key, std::int64_t fallback) const {
        if (!has(key)) return fallback;
        const json& v = at(key);
        if (v.is_number_integer()) return v.get<std::int64_t>();
        if (v.is_number_float()) {
            const double x = v.get<double>();
            if (std::isfinite(x) && x == std::floor(x) && std::abs(x) < 9e15) return static_cast<std::int64_t>(x);
        }
        throw ConfigError(path(key), "must be an integer");
    }

    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        if (!at(key).is_boolean()) throw ConfigError(path(key), "must be true or false");
        return at(key).get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback) const {
        if (!has(key)) return fallback;
        if (!at(key).is_string()) throw ConfigError(path(key), "must be a string");
        return at(key).get<std::string>();
    }

    std::vector<double> numbers(const std::string& key) const {
        std::vector<double> out;
        if (!has(key)) return out;
        const json& v = at(key);
        if (!v.is_array()) throw ConfigError(path(key), "must be an array of numbers");
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(path(key), "must be an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::vector<int> integers(const std::string& key) const {
        std::vector<int> out;
        for (double x : numbers(key)) {
            if (x != std::floor(x)) throw ConfigError(path(key), "must be an array of integers");
            out.push_back(static_cast<int>(x));
        }
        return out;
    }

    /// Throws on keys that were never queried, catching typos.
    void reject_unknown() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw ConfigError(path(key), "unknown field");
    }

private:
    const json& j_;
    std::string prefix_;
    mutable std::set<std::string> seen_;
};

inline Demand parse_demand(const Reader& r) {
    const json& d = r.at("demand");
    if (d.is_number()) return StationaryDemand{d.get<double>()};
    Reader dr(d, r.path("demand"));
    const std::string type = dr.string("type", "stationary");
    Demand out;
    if (type == "stationary") {
        out = StationaryDemand{dr.number("rate", 1.0)};
    } else if (type == "sinusoidal") {
        out = SinusoidalDemand{dr.number("base", 1.0), dr.number("amplitude", 0.0),
                               dr.number("angular_frequency", 1.0)};
    } else {
        throw ConfigError(dr.path("type"), "must be 'stationary' or 'sinusoidal'");
    }
    dr.reject_unknown();
    try {
        out.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(r.path("demand"), e.what());
    }
    return out;
}

inline ingest::TripFormat parse_format(const Reader& r, const std::string& key) {
    const json& f = r.at(key);
    if (f.is_string()) {
        if (f.get<std::string>() == "citibike") return ingest::TripFormat::citibike();
        throw ConfigError(r.path(key), "unknown preset (expected 'citibike' or an object)");
    }
    Reader fr(f, r.path(key));
    ingest::TripFormat fmt;
    const std::string delim = fr.string("delimiter", ",");
    if (delim.size() != 1) throw ConfigError(fr.path("delimiter"), "must be a single character");
    fmt.delimiter = delim[0];
    fmt.duration_column = fr.string("duration_column", fmt.duration_column);
    fmt.start_time_column = fr.string("start_time_column", fmt.start_time_column);
    fmt.end_time_column = fr.string("end_time_column", fmt.end_time_column);
    fmt.start_station_column = fr.string("start_station_column", fmt.start_station_column);
    fmt.end_station_column = fr.string("end_station_column", fmt.end_station_column);
    fmt.timezone = fr.string("timezone", fmt.timezone);
    fr.reject_unknown();
    return fmt;
}

}  // namespace detail

/// Builds and validates an ExperimentConfig from a JSON document whose
/// field names mirror the struct. Errors name the offending field.
inline ExperimentConfig parse_config(const json& doc) {
    using detail::Reader;
    const Reader r(doc, "");
    ExperimentConfig cfg;
    cfg.source = doc;

    const std::string kind = r.string("kind", "meanfield");
    const auto k = parse_kind(kind);
    if (!k) throw ConfigError("kind", "unknown experiment kind '" + kind + "'");
    cfg.kind = *k;

    auto& p = cfg.params;
    p.stations = r.integer("stations", 100);
    if (p.stations < 1) throw ConfigError("stations", "must be >= 1");
    p.capacity = static_cast<int>(r.integer("capacity", 3));
    if (p.capacity < 1) throw ConfigError("capacity", "must be >= 1");
    if (r.has("fleet") && r.has("gamma")) throw ConfigError("gamma", "give either fleet or gamma, not both");
    if (r.has("gamma")) {
        const double g = r.number("gamma", 0.0);
        const double m = g * static_cast<double>(p.stations);
        if (std::abs(m - std::round(m)) > 1e-9) throw ConfigError("gamma", "gamma * stations must be an integer");
        p.fleet = static_cast<std::int64_t>(std::llround(m));
    } else {
        p.fleet = r.integer("fleet", 0);
    }
    if (p.fleet < 0) throw ConfigError("fleet", "must be >= 0");
    p.travel_rate = r.number("travel_rate", 1.0);
    if (!(p.travel_rate > 0.0)) throw ConfigError("travel_rate", "must be > 0");

    if (r.has("utilization") && r.has("station_rates"))
        throw ConfigError("station_rates", "give either utilization or station_rates, not both");
    std::optional<double> derived_rate;
    if (r.has("station_rates")) {
        const auto rates = r.numbers("station_rates");
        if (rates.size() != static_cast<std::size_t>(p.stations))
            throw ConfigError("station_rates", "need one rate per station");
        UtilizationProfile u;
        try {
            u = utilization_from_rates(rates);
        } catch (const ParameterError& e) {
            throw ConfigError("station_rates", e.what());
        }
        p.classes = u.classes;
        derived_rate = u.min_rate;
    } else if (r.has("utilization")) {
        const json& u = r.at("utilization");
        if (!u.is_array() || u.empty()) throw ConfigError("utilization", "must be a non-empty array");
        p.classes.clear();
        for (std::size_t i = 0; i < u.size(); ++i) {
            const Reader cr(u[i], "utilization[" + std::to_string(i) + "]");
            p.classes.push_back({cr.number("r", 1.0), cr.number("weight", 1.0)});
            cr.reject_unknown();
        }
    }
    if (r.has("demand")) {
        p.demand = detail::parse_demand(r);
    } else {
        p.demand = StationaryDemand{derived_rate.value_or(1.0)};
    }
    try {
        p.validate();
    } catch (const ParameterError& e) {
        throw ConfigError("params", e.what());
    }

    if (r.has("initial")) {
        const Reader ir(r.at("initial"), "initial");
        if (ir.has("proportions") == ir.has("counts"))
            throw ConfigError("initial", "give exactly one of proportions or counts");
        if (ir.has("proportions")) {
            auto y = ir.numbers("proportions");
            if (y.size() != static_cast<std::size_t>(p.capacity + 1))
                throw ConfigError("initial.proportions", "need capacity + 1 entries");
            cfg.initial_proportions = std::move(y);
        } else {
            const json& c = ir.at("counts");
            if (!c.is_array()) throw ConfigError("initial.counts", "must be an array");
            StationCounts counts;
            // a flat array is the single-class shorthand
            const bool flat = !c.empty() && c[0].is_number();
            const json rows = flat ? json::array({c}) : c;
            for (const auto& row : rows) {
                std::vector<std::int64_t> v;
                if (!row.is_array()) throw ConfigError("initial.counts", "rows must be arrays of integers");
                for (const auto& e : row) {
                    if (!e.is_number_integer()) throw ConfigError("initial.counts", "entries must be integers");
                    v.push_back(e.get<std::int64_t>());
                }
                counts.push_back(std::move(v));
            }
            cfg.initial_counts = std::move(counts);
        }
        ir.reject_unknown();
    }

    cfg.horizon = r.number("horizon", cfg.horizon);
    cfg.step = r.number("step", cfg.step);
    cfg.output_dt = r.number("output_dt", cfg.output_dt);
    try {
        TimeGrid{cfg.horizon, cfg.step, cfg.output_dt}.validate();
    } catch (const ParameterError& e) {
        throw ConfigError("horizon/step/output_dt", e.what());
    }
    const auto reps = r.integer("replications", 50);
    if (reps < 2) throw ConfigError("replications", "must be >= 2");
    cfg.replications = static_cast<std::size_t>(reps);
    const auto seed = r.integer("seed", 1);
    if (seed < 0) throw ConfigError("seed", "must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(seed);
    const auto threads = r.integer("threads", 1);
    if (threads < 1 || threads > 1024) throw ConfigError("threads", "must be in [1, 1024]");
    cfg.threads = static_cast<unsigned>(threads);
    cfg.out = r.string("out", cfg.out);
    cfg.svg = r.boolean("svg", false);
    cfg.series_k = r.integers("series_k");
    for (int k : cfg.series_k)
        if (k < 0 || k > p.capacity) throw ConfigError("series_k", "entries must lie in [0, capacity]");

    if (r.has("sweep")) {
        const Reader sr(r.at("sweep"), "sweep");
        cfg.sweep.parameter = sr.string("parameter", "lambda");
        if (cfg.sweep.parameter != "lambda" && cfg.sweep.parameter != "mu" && cfg.sweep.parameter != "gamma")
            throw ConfigError("sweep.parameter", "must be lambda, mu or gamma");
        cfg.sweep.values = sr.numbers("values");
        for (double v : cfg.sweep.values)
            if (!(v > 0.0)) throw ConfigError("sweep.values", "must be positive");
        sr.reject_unknown();
    }
    if (cfg.kind == Kind::Sweep && cfg.sweep.values.empty())
        throw ConfigError("sweep.values", "sweep experiments need at least one value");

    if (r.has("lag")) {
        const Reader lr(r.at("lag"), "lag");
        cfg.lag.burn_in = lr.number("burn_in", 5.0);
        cfg.lag.series_k = lr.integers("series_k");
        cfg.lag.travel_rates = lr.numbers("travel_rates");
        cfg.lag.source = lr.string("source", "meanfield");
        if (cfg.lag.source != "meanfield" && cfg.lag.source != "simulation")
            throw ConfigError("lag.source", "must be meanfield or simulation");
        for (int k : cfg.lag.series_k)
            if (k < 0 || k > p.capacity) throw ConfigError("lag.series_k", "entries must lie in [0, capacity]");
        for (double mu : cfg.lag.travel_rates)
            if (!(mu > 0.0)) throw ConfigError("lag.travel_rates", "must be positive");
        lr.reject_unknown();
    }
    if (cfg.kind == Kind::Lag && p.demand.sinusoid() == nullptr)
        throw ConfigError("demand", "lag experiments need sinusoidal demand");
    if ((cfg.kind == Kind::Equilibrium || cfg.kind == Kind::Sweep) && !p.demand.is_stationary())
        throw ConfigError("demand", "equilibrium and sweep experiments need stationary demand");

    if (r.has("ingest")) {
        const Reader gr(r.at("ingest"), "ingest");
        cfg.ingest.path = gr.string("path", "");
        if (gr.has("format")) cfg.ingest.format = detail::parse_format(gr, "format");
        if (gr.has("timezone")) cfg.ingest.format.timezone = gr.string("timezone", "");
        cfg.ingest.bin_seconds = gr.number("bin_seconds", 300.0);
        cfg.ingest.fold_weeks = gr.boolean("fold_weeks", true);
        cfg.ingest.histogram_bin_seconds = gr.number("histogram_bin_seconds", 60.0);
        cfg.ingest.time_unit_seconds = gr.number("time_unit_seconds", 3600.0);
        cfg.ingest.angular_frequency = gr.number("angular_frequency", cfg.ingest.angular_frequency);
        if (!(cfg.ingest.time_unit_seconds > 0.0)) throw ConfigError("ingest.time_unit_seconds", "must be positive");
        if (!(cfg.ingest.angular_frequency > 0.0)) throw ConfigError("ingest.angular_frequency", "must be positive");
        gr.reject_unknown();
    }
    if (cfg.kind == Kind::Ingest && cfg.ingest.path.empty())
        throw ConfigError("ingest.path", "ingest experiments need a trip file path");

    r.reject_unknown();
    return cfg;
}

inline json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IngestError("cannot open config file " + path);
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("<document>", std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace bikeshare::cli
