#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <istream>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bikeshare/csv.hpp"
#include "bikeshare/errors.hpp"
#include "bikeshare/params.hpp"

namespace bikeshare::ingest {

/// Times are wall-clock seconds since 1970-01-01 00:00 in the declared
/// timezone, so calendar arithmetic (day, weekday) needs no zone lookups.
struct TripRecord {
    double start_time = 0.0;
    double end_time = 0.0;
    double duration = 0.0;  // seconds
    std::string start_station_id;
    std::string end_station_id;
};

/// Column mapping for a delimited trip file.
struct TripFormat {
    char delimiter = ',';
    std::string duration_column;  // empty: derive from timestamps
    std::string start_time_column = "start_time";
    std::string end_time_column = "end_time";
    std::string start_station_column = "start_station_id";
    std::string end_station_column = "end_station_id";
    std::string timezone = "America/New_York";

    /// Public Citi Bike schema (2013-2016 releases).
    static TripFormat citibike() {
        TripFormat f;
        f.duration_column = "tripduration";
        f.start_time_column = "starttime";
        f.end_time_column = "stoptime";
        f.start_station_column = "start station id";
        f.end_station_column = "end station id";
        return f;
    }
};

struct ParsedTime {
    double local_seconds = 0.0;
    double resolution = 1.0;  // 60 when the source omitted seconds
};

namespace detail {

inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    using namespace std::chrono;
    return sys_days{year{y} / month{m} / day{d}}.time_since_epoch().count();
}

inline bool valid_date(int y, unsigned m, unsigned d) {
    using namespace std::chrono;
    return year_month_day{year{y}, month{m}, day{d}}.ok();
}

/// Reads an unsigned integer of 1..max_digits digits at `pos`.
inline std::optional<int> read_int(std::string_view s, std::size_t& pos, std::size_t max_digits) {
    std::size_t start = pos;
    int v = 0;
    while (pos < s.size() && pos - start < max_digits && s[pos] >= '0' && s[pos] <= '9')
        v = v * 10 + (s[pos++] - '0');
    if (pos == start) return std::nullopt;
    return v;
}

inline std::mutex& tz_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace detail

/// Wall-clock seconds in `timezone` for a UTC epoch second, using the system
/// zoneinfo database.
inline std::int64_t utc_to_local(std::int64_t utc, const std::string& timezone) {
    std::lock_guard lock(detail::tz_mutex());
    const char* old = std::getenv("TZ");
    const std::optional<std::string> saved = old ? std::optional<std::string>(old) : std::nullopt;
    ::setenv("TZ", timezone.c_str(), 1);
    ::tzset();
    std::tm tm{};
    const std::time_t tt = static_cast<std::time_t>(utc);
    ::localtime_r(&tt, &tm);
    const std::int64_t local = static_cast<std::int64_t>(::timegm(&tm));
    if (saved) ::setenv("TZ", saved->c_str(), 1);
    else ::unsetenv("TZ");
    ::tzset();
    return local;
}

/// Parses "YYYY-MM-DD[ T]HH:MM[:SS[.fff]][Z|+HH[:MM]|-HH[:MM]]" or
/// "M/D/YYYY H:MM[:SS]". Timestamps without an offset are taken as wall-clock
/// time in `timezone`; timestamps with one are converted into it.
inline std::optional<ParsedTime> parse_timestamp(std::string_view s, const std::string& timezone) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    std::size_t pos = 0;
    int y = 0, mo = 0, d = 0;
    auto a = detail::read_int(s, pos, 4);
    if (!a || pos >= s.size()) return std::nullopt;
    if (s[pos] == '-') {
        if (pos != 4) return std::nullopt;
        y = *a;
        ++pos;
        auto m = detail::read_int(s, pos, 2);
        if (!m || pos >= s.size() || s[pos] != '-') return std::nullopt;
        ++pos;
        auto dd = detail::read_int(s, pos, 2);
        if (!dd) return std::nullopt;
        mo = *m;
        d = *dd;
    } else if (s[pos] == '/') {
        mo = *a;
        ++pos;
        auto dd = detail::read_int(s, pos, 2);
        if (!dd || pos >= s.size() || s[pos] != '/') return std::nullopt;
        ++pos;
        auto yy = detail::read_int(s, pos, 4);
        if (!yy) return std::nullopt;
        d = *dd;
        y = *yy;
    } else {
        return std::nullopt;
    }
    if (mo < 1 || mo > 12 || !detail::valid_date(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)))
        return std::nullopt;
    if (pos >= s.size() || (s[pos] != ' ' && s[pos] != 'T')) return std::nullopt;
    ++pos;
    auto hh = detail::read_int(s, pos, 2);
    if (!hh || pos >= s.size() || s[pos] != ':') return std::nullopt;
    ++pos;
    auto mm = detail::read_int(s, pos, 2);
    if (!mm) return std::nullopt;
    double sec = 0.0;
    double resolution = 60.0;
    if (pos < s.size() && s[pos] == ':') {
        ++pos;
        auto ss = detail::read_int(s, pos, 2);
        if (!ss) return std::nullopt;
        sec = *ss;
        resolution = 1.0;
        if (pos < s.size() && s[pos] == '.') {
            ++pos;
            double scale = 0.1;
            const std::size_t start = pos;
            while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
                sec += (s[pos++] - '0') * scale;
                scale *= 0.1;
            }
            if (pos == start) return std::nullopt;
        }
    }
    if (*hh > 23 || *mm > 59 || sec >= 61.0) return std::nullopt;

    const auto day = detail::days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
    std::int64_t whole = day * 86400 + std::int64_t{*hh} * 3600 + std::int64_t{*mm} * 60;
    const double frac_sec = sec;

    if (pos < s.size()) {
        // explicit offset: value is (local at offset); convert to UTC, then to timezone
        std::int64_t offset = 0;
        if (s[pos] == 'Z') {
            ++pos;
        } else if (s[pos] == '+' || s[pos] == '-') {
            const int sign = s[pos] == '-' ? -1 : 1;
            ++pos;
            auto oh = detail::read_int(s, pos, 2);
            if (!oh) return std::nullopt;
            int om = 0;
            if (pos < s.size() && s[pos] == ':') ++pos;
            if (pos < s.size()) {
                auto omm = detail::read_int(s, pos, 2);
                if (!omm) return std::nullopt;
                om = *omm;
            }
            offset = sign * (std::int64_t{*oh} * 3600 + std::int64_t{om} * 60);
        } else {
            return std::nullopt;
        }
        if (pos != s.size()) return std::nullopt;
        whole = utc_to_local(whole - offset, timezone);
    }
    return ParsedTime{static_cast<double>(whole) + frac_sec, resolution};
}

/// Inverse of parse_timestamp for offset-free ISO output.
inline std::string format_timestamp(double local_seconds) {
    const auto whole = static_cast<std::int64_t>(std::floor(local_seconds));
    const double frac = local_seconds - static_cast<double>(whole);
    std::int64_t days = whole >= 0 ? whole / 86400 : -((-whole + 86399) / 86400);
    const std::int64_t rem = whole - days * 86400;
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
    std::ostringstream os;
    os << std::setfill('0') << std::setw(4) << static_cast<int>(ymd.year()) << '-' << std::setw(2)
       << static_cast<unsigned>(ymd.month()) << '-' << std::setw(2) << static_cast<unsigned>(ymd.day())
       << ' ' << std::setw(2) << rem / 3600 << ':' << std::setw(2) << (rem / 60) % 60 << ':'
       << std::setw(2) << rem % 60;
    if (frac > 0.0) {
        std::ostringstream f;
        f << std::fixed << std::setprecision(6) << frac;
        std::string fs = f.str().substr(1);  // ".xxxxxx"
        while (fs.size() > 2 && fs.back() == '0') fs.pop_back();
        os << fs;
    }
    return os.str();
}

struct ParseResult {
    std::vector<TripRecord> records;
    std::size_t skipped = 0;
};

/// Reads trips from delimited text with a header row. Rows with unparsable
/// fields, end < start, or a stated duration disagreeing with the timestamps
/// (beyond their resolution) are skipped and counted.
inline ParseResult parse_trips(std::istream& is, const TripFormat& fmt) {
    std::string line;
    if (!std::getline(is, line)) throw IngestError("parse_trips: missing header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = csv::split_line(line, fmt.delimiter);
    auto find = [&](const std::string& name, bool required) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        if (required) throw IngestError("parse_trips: missing required column '" + name + "'");
        return std::nullopt;
    };
    const auto c_start = *find(fmt.start_time_column, true);
    const auto c_end = *find(fmt.end_time_column, true);
    const auto c_sst = *find(fmt.start_station_column, true);
    const auto c_est = *find(fmt.end_station_column, true);
    const auto c_dur = fmt.duration_column.empty() ? std::nullopt : find(fmt.duration_column, true);

    ParseResult out;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = csv::split_line(line, fmt.delimiter);
        if (cells.size() != header.size()) {
            ++out.skipped;
            continue;
        }
        const auto st = parse_timestamp(cells[c_start], fmt.timezone);
        const auto et = parse_timestamp(cells[c_end], fmt.timezone);
        if (!st || !et || et->local_seconds < st->local_seconds) {
            ++out.skipped;
            continue;
        }
        TripRecord r;
        r.start_time = st->local_seconds;
        r.end_time = et->local_seconds;
        r.duration = r.end_time - r.start_time;
        if (c_dur) {
            const auto dur = csv::parse_double(cells[*c_dur]);
            const double tol = std::max({1.0, st->resolution, et->resolution});
            if (!dur || *dur < 0.0 || std::abs(*dur - r.duration) > tol) {
                ++out.skipped;
                continue;
            }
            r.duration = *dur;
        }
        r.start_station_id = cells[c_sst];
        r.end_station_id = cells[c_est];
        out.records.push_back(std::move(r));
    }
    return out;
}

inline ParseResult parse_trips(const std::string& path, const TripFormat& fmt) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestError("parse_trips: cannot open " + path);
    return parse_trips(is, fmt);
}

/// Writes records in `fmt`'s column layout with ISO timestamps.
inline void write_trips(std::ostream& os, std::span<const TripRecord> trips, const TripFormat& fmt) {
    const char d = fmt.delimiter;
    if (!fmt.duration_column.empty()) os << csv::quote_if_needed(fmt.duration_column, d) << d;
    os << csv::quote_if_needed(fmt.start_time_column, d) << d
       << csv::quote_if_needed(fmt.end_time_column, d) << d
       << csv::quote_if_needed(fmt.start_station_column, d) << d
       << csv::quote_if_needed(fmt.end_station_column, d) << '\n';
    for (const auto& r : trips) {
        if (!fmt.duration_column.empty()) os << csv::format_double(r.duration) << d;
        os << format_timestamp(r.start_time) << d << format_timestamp(r.end_time) << d
           << csv::quote_if_needed(r.start_station_id, d) << d
           << csv::quote_if_needed(r.end_station_id, d) << '\n';
    }
}

struct BinOptions {
    double bin_seconds = 300.0;
    bool fold_weeks = false;
    /// Day-aligned span of trip start times when unset.
    std::optional<double> span_start;
    std::optional<double> span_end;
};

/// Start/end counts per time bin. With week folding, bin_start is seconds
/// since Monday 00:00 and counts are averaged over the number of times each
/// weekly slot occurs inside the span.
struct BinnedProfile {
    double origin = 0.0;  // local seconds of the first bin (unfolded)
    double bin_seconds = 300.0;
    bool folded = false;
    std::vector<double> bin_start;
    std::vector<double> starts;
    std::vector<double> ends;

    csv::Table to_table() const {
        csv::Table t;
        t.header = {"bin_start_seconds", "starts_per_bin", "ends_per_bin"};
        for (std::size_t i = 0; i < bin_start.size(); ++i) t.rows.push_back({bin_start[i], starts[i], ends[i]});
        return t;
    }
};

inline BinnedProfile binned_rates(std::span<const TripRecord> trips, const BinOptions& opt = {}) {
    constexpr double day = 86400.0;
    constexpr double week = 7.0 * day;
    constexpr double monday_offset = 3.0 * day;  // 1970-01-01 was a Thursday
    if (trips.empty()) throw IngestError("binned_rates: no trips");
    if (!(opt.bin_seconds > 0.0) || std::fmod(day, opt.bin_seconds) != 0.0)
        throw ParameterError("binned_rates: bin width must divide one day");

    // the default span covers the days on which trips start; ends past it are dropped
    double lo = trips.front().start_time, hi = lo;
    for (const auto& r : trips) {
        lo = std::min(lo, r.start_time);
        hi = std::max(hi, r.start_time);
    }
    const double span_start = opt.span_start.value_or(std::floor(lo / day) * day);
    double span_end = opt.span_end.value_or(std::floor(hi / day) * day + day);
    if (!(span_end > span_start)) throw ParameterError("binned_rates: empty span");
    const auto span_bins = static_cast<std::size_t>(std::ceil((span_end - span_start) / opt.bin_seconds - 1e-9));

    BinnedProfile p;
    p.bin_seconds = opt.bin_seconds;
    p.folded = opt.fold_weeks;
    p.origin = span_start;
    if (!opt.fold_weeks) {
        p.starts.assign(span_bins, 0.0);
        p.ends.assign(span_bins, 0.0);
        auto bin_of = [&](double t) -> std::optional<std::size_t> {
            const double x = std::floor((t - span_start) / opt.bin_seconds);
            if (x < 0 || x >= static_cast<double>(span_bins)) return std::nullopt;
            return static_cast<std::size_t>(x);
        };
        for (const auto& r : trips) {
            if (auto b = bin_of(r.start_time)) p.starts[*b] += 1.0;
            if (auto b = bin_of(r.end_time)) p.ends[*b] += 1.0;
        }
        for (std::size_t i = 0; i < span_bins; ++i) p.bin_start.push_back(static_cast<double>(i) * opt.bin_seconds);
        return p;
    }

    const auto week_bins = static_cast<std::size_t>(week / opt.bin_seconds);
    auto slot_of = [&](double t) {
        const double x = std::fmod(t + monday_offset, week);
        return static_cast<std::size_t>(std::floor((x < 0 ? x + week : x) / opt.bin_seconds)) % week_bins;
    };
    std::vector<double> occurrences(week_bins, 0.0);
    for (std::size_t i = 0; i < span_bins; ++i)
        occurrences[slot_of(span_start + static_cast<double>(i) * opt.bin_seconds)] += 1.0;
    p.starts.assign(week_bins, 0.0);
    p.ends.assign(week_bins, 0.0);
    for (const auto& r : trips) {
        if (r.start_time >= span_start && r.start_time < span_end) p.starts[slot_of(r.start_time)] += 1.0;
        if (r.end_time >= span_start && r.end_time < span_end) p.ends[slot_of(r.end_time)] += 1.0;
    }
    for (std::size_t i = 0; i < week_bins; ++i) {
        p.bin_start.push_back(static_cast<double>(i) * opt.bin_seconds);
        if (occurrences[i] > 0.0) {
            p.starts[i] /= occurrences[i];
            p.ends[i] /= occurrences[i];
        }
    }
    return p;
}

struct DurationStats {
    std::size_t count = 0;
    double mean = 0.0;
    double median = 0.0;
    double std_dev = 0.0;  // sample standard deviation (n - 1)
    double histogram_bin_width = 60.0;
    std::vector<std::size_t> histogram;  // bin i covers [i*w, (i+1)*w)
    /// Travel rate under exponential travel times, per second.
    double travel_rate_per_second = 0.0;
};

inline DurationStats duration_stats(std::span<const TripRecord> trips, double histogram_bin_width = 60.0) {
    if (trips.empty()) throw IngestError("duration_stats: no trips");
    if (!(histogram_bin_width > 0.0)) throw ParameterError("duration_stats: bin width must be positive");
    std::vector<double> d;
    d.reserve(trips.size());
    for (const auto& r : trips) d.push_back(r.duration);
    std::sort(d.begin(), d.end());

    DurationStats s;
    s.count = d.size();
    s.histogram_bin_width = histogram_bin_width;
    // sum in sorted order so the result does not depend on record order
    s.mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    const std::size_t n = d.size();
    s.median = n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
    double ss = 0.0;
    for (double x : d) ss += (x - s.mean) * (x - s.mean);
    s.std_dev = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    s.histogram.assign(static_cast<std::size_t>(d.back() / histogram_bin_width) + 1, 0);
    for (double x : d) ++s.histogram[static_cast<std::size_t>(x / histogram_bin_width)];
    s.travel_rate_per_second = s.mean > 0.0 ? 1.0 / s.mean : 0.0;
    return s;
}

struct SinusoidFit {
    SinusoidalDemand demand;
    double residual_norm = 0.0;
    bool amplitude_clamped = false;
};

/// Least-squares fit of values ~ base * (1 + amplitude * sin(w t)) at fixed w.
/// |amplitude| is clamped to max_amplitude (flagged) so the result is a
/// valid demand profile.
inline SinusoidFit fit_sinusoid(std::span<const double> times, std::span<const double> values,
                                double angular_frequency, double max_amplitude = 0.99) {
    if (times.size() != values.size() || times.size() < 2)
        throw IngestError("fit_sinusoid: need at least two (time, value) pairs");
    if (!(angular_frequency > 0.0)) throw ParameterError("fit_sinusoid: frequency must be positive");
    const auto n = static_cast<Eigen::Index>(times.size());
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = std::sin(angular_frequency * times[static_cast<std::size_t>(i)]);
        v[i] = values[static_cast<std::size_t>(i)];
    }
    Eigen::VectorXd coef(2);
    if (X.col(1).cwiseAbs().maxCoeff() < 1e-12) {
        coef << v.mean(), 0.0;  // sine never sampled away from zero
    } else {
        coef = X.colPivHouseholderQr().solve(v);
    }
    const double base = coef[0];
    if (!(base > 0.0)) throw IngestError("fit_sinusoid: fitted base rate is not positive");
    double amp = coef[1] / base;
    if (std::abs(amp) < 1e-12) amp = 0.0;

    SinusoidFit fit;
    fit.residual_norm = (X * coef - v).norm();
    if (std::abs(amp) > max_amplitude) {
        amp = std::copysign(max_amplitude, amp);
        fit.amplitude_clamped = true;
    }
    fit.demand = SinusoidalDemand{base, amp, angular_frequency};
    return fit;
}

}  // namespace bikeshare::ingest
