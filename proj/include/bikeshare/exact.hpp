#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "bikeshare/errors.hpp"
#include "bikeshare/params.hpp"

namespace bikeshare::exact {

/// Per-station model for brute-force solution: N stations with individual
/// arrival rates, uniform routing P_i = 1/N.
struct TinyModel {
    int stations = 1;
    std::int64_t fleet = 0;
    int capacity = 1;
    double travel_rate = 1.0;
    std::vector<double> station_rates;

    /// Expands utilization classes into round(w_c * N) stations each.
    static TinyModel from_params(const ModelParams& p) {
        p.validate();
        if (!p.demand.is_stationary())
            throw ParameterError("TinyModel: exact oracle requires stationary demand");
        TinyModel m;
        m.stations = static_cast<int>(p.stations);
        m.fleet = p.fleet;
        m.capacity = p.capacity;
        m.travel_rate = p.travel_rate;
        for (std::size_t c = 0; c < p.class_count(); ++c) {
            const double x = p.classes[c].weight * static_cast<double>(p.stations);
            if (std::abs(x - std::round(x)) > 1e-9)
                throw ParameterError("TinyModel: class weight times N must be an integer");
            for (long i = 0; i < std::lround(x); ++i) m.station_rates.push_back(p.class_rate(c, 0.0));
        }
        return m;
    }

    void validate() const {
        if (stations < 1 || capacity < 1 || fleet < 0 || !(travel_rate > 0.0))
            throw ParameterError("TinyModel: invalid N, K, M or mu");
        if (station_rates.size() != static_cast<std::size_t>(stations))
            throw ParameterError("TinyModel: need one arrival rate per station");
        for (double r : station_rates)
            if (!(r > 0.0)) throw ParameterError("TinyModel: arrival rates must be positive");
    }
};

/// Number of vectors in {0..K}^N with coordinate sum <= M.
inline double count_states(int stations, int capacity, std::int64_t fleet) {
    const std::int64_t cap_total = std::min<std::int64_t>(fleet, std::int64_t{stations} * capacity);
    std::vector<double> ways(static_cast<std::size_t>(cap_total + 1), 0.0);
    ways[0] = 1.0;
    for (int i = 0; i < stations; ++i) {
        std::vector<double> next(ways.size(), 0.0);
        for (std::size_t s = 0; s < ways.size(); ++s) {
            if (ways[s] == 0.0) continue;
            for (int x = 0; x <= capacity && s + static_cast<std::size_t>(x) < ways.size(); ++x)
                next[s + static_cast<std::size_t>(x)] += ways[s];
        }
        ways.swap(next);
    }
    double total = 0.0;
    for (double w : ways) total += w;
    return total;
}

/// Enumeration of occupancy vectors x with x_i <= K and sum(x) <= M.
class TinyStateSpace {
public:
    static constexpr double max_states = 1e6;

    TinyStateSpace(int stations, int capacity, std::int64_t fleet)
        : stations_(stations), capacity_(capacity) {
        const double n = count_states(stations, capacity, fleet);
        if (n > max_states)
            throw CapacityError("TinyStateSpace: " + std::to_string(n) + " states exceed the 1e6 guard");
        if (static_cast<double>(stations) * std::log2(capacity + 1.0) > 63.0)
            throw CapacityError("TinyStateSpace: occupancy vectors do not fit a 64-bit key");
        states_.reserve(static_cast<std::size_t>(n));
        std::vector<int> x(static_cast<std::size_t>(stations), 0);
        enumerate(x, 0, fleet);
    }

    std::size_t size() const { return states_.size(); }
    int stations() const { return stations_; }
    int capacity() const { return capacity_; }
    const std::vector<int>& state(std::size_t i) const { return states_[i]; }

    /// Index of `x`, or size() if absent.
    std::size_t index_of(const std::vector<int>& x) const {
        const auto it = index_.find(encode(x));
        return it == index_.end() ? states_.size() : it->second;
    }

private:
    // depth-first over stations, pruning on the remaining fleet
    void enumerate(std::vector<int>& x, int station, std::int64_t remaining) {
        if (station == stations_) {
            index_.emplace(encode(x), states_.size());
            states_.push_back(x);
            return;
        }
        const auto limit = static_cast<int>(std::min<std::int64_t>(capacity_, remaining));
        for (int v = 0; v <= limit; ++v) {
            x[static_cast<std::size_t>(station)] = v;
            enumerate(x, station + 1, remaining - v);
        }
        x[static_cast<std::size_t>(station)] = 0;
    }

    std::uint64_t encode(const std::vector<int>& x) const {
        std::uint64_t code = 0;
        for (int v : x) code = code * static_cast<std::uint64_t>(capacity_ + 1) + static_cast<std::uint64_t>(v);
        return code;
    }

    int stations_;
    int capacity_;
    std::vector<std::vector<int>> states_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// Generator of X(t) on `space`: station i loses a bike at rate lambda_i
/// when non-empty and gains one at rate (mu/N)(M - sum x) when not full.
inline Eigen::SparseMatrix<double, Eigen::RowMajor> build_generator(const TinyModel& m,
                                                                   const TinyStateSpace& space) {
    m.validate();
    if (space.stations() != m.stations || space.capacity() != m.capacity)
        throw ParameterError("build_generator: state space does not match the model");
    std::vector<Eigen::Triplet<double>> entries;
    const double route = m.travel_rate / static_cast<double>(m.stations);
    std::vector<int> y;
    for (std::size_t s = 0; s < space.size(); ++s) {
        const auto& x = space.state(s);
        std::int64_t docked = 0;
        for (int v : x) docked += v;
        const double circulating = static_cast<double>(m.fleet - docked);
        double out_rate = 0.0;
        for (int i = 0; i < m.stations; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            if (x[ui] > 0) {
                y = x;
                --y[ui];
                entries.emplace_back(static_cast<int>(s), static_cast<int>(space.index_of(y)),
                                     m.station_rates[ui]);
                out_rate += m.station_rates[ui];
            }
            if (x[ui] < m.capacity && circulating > 0.0) {
                y = x;
                ++y[ui];
                const double r = route * circulating;
                entries.emplace_back(static_cast<int>(s), static_cast<int>(space.index_of(y)), r);
                out_rate += r;
            }
        }
        entries.emplace_back(static_cast<int>(s), static_cast<int>(s), -out_rate);
    }
    const auto n = static_cast<Eigen::Index>(space.size());
    Eigen::SparseMatrix<double, Eigen::RowMajor> Q(n, n);
    Q.setFromTriplets(entries.begin(), entries.end());
    return Q;
}

/// p0 * exp(Q t) by uniformization. The Poisson series is truncated once the
/// remaining weight is below 1e-12.
template <class Generator>
Eigen::VectorXd transient(const Generator& Q, const Eigen::VectorXd& p0, double t) {
    if (p0.size() != Q.rows()) throw ParameterError("transient: distribution length mismatch");
    if (t < 0.0) throw ParameterError("transient: negative time");
    double rate = 0.0;
    for (Eigen::Index i = 0; i < Q.rows(); ++i) rate = std::max(rate, std::abs(Q.coeff(i, i)));
    if (t == 0.0 || rate == 0.0) return p0;

    const double a = rate * t;
    const Eigen::SparseMatrix<double> Qt = Eigen::SparseMatrix<double>(Q).transpose();
    constexpr double tail_tol = 1e-12;
    Eigen::VectorXd term = p0;  // p0 * P^n as a column vector
    Eigen::VectorXd out = Eigen::VectorXd::Zero(p0.size());
    double covered = 0.0;
    for (long n = 0;; ++n) {
        const double w = std::exp(static_cast<double>(n) * std::log(a) - a -
                                  std::lgamma(static_cast<double>(n) + 1.0));
        out += w * term;
        covered += w;
        if (1.0 - covered < tail_tol && static_cast<double>(n) > a) break;
        if (static_cast<double>(n) > a + 50.0 * std::sqrt(a) + 200.0) break;
        term += (Qt * term) / rate;
    }
    return out;
}

/// Exact E[Y_t(k)] = sum_x p(x) * #{i : x_i = k} / N.
inline Eigen::VectorXd expected_empirical(const Eigen::VectorXd& dist, const TinyStateSpace& space) {
    if (dist.size() != static_cast<Eigen::Index>(space.size()))
        throw ParameterError("expected_empirical: distribution length mismatch");
    Eigen::VectorXd ey = Eigen::VectorXd::Zero(space.capacity() + 1);
    const double inv_n = 1.0 / static_cast<double>(space.stations());
    for (std::size_t s = 0; s < space.size(); ++s) {
        const double ps = dist[static_cast<Eigen::Index>(s)];
        if (ps == 0.0) continue;
        for (int v : space.state(s)) ey[v] += ps * inv_n;
    }
    return ey;
}

/// Point mass at occupancy vector x.
inline Eigen::VectorXd point_mass(const TinyStateSpace& space, const std::vector<int>& x) {
    const std::size_t i = space.index_of(x);
    if (i == space.size()) throw ParameterError("point_mass: state not in the state space");
    Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.size()));
    p[static_cast<Eigen::Index>(i)] = 1.0;
    return p;
}

}  // namespace bikeshare::exact
