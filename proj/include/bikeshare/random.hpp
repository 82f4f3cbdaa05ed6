#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace bikeshare {

/// SplitMix64 (Steele, Lea, Flood). Used to expand seeds.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// Seed of replication `index` under `master_seed`. Depends only on the pair,
/// so replications can run in any order.
inline std::uint64_t stream_seed(std::uint64_t master_seed, std::uint64_t index) {
    SplitMix64 a(master_seed);
    const std::uint64_t h = a.next();
    SplitMix64 b(h ^ (index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
    return b.next();
}

/// xoshiro256** 1.0 (Blackman, Vigna). Satisfies UniformRandomBitGenerator.
///
/// Distributions are drawn through the member helpers rather than <random>
/// distributions, whose output is implementation-defined, so streams are
/// reproducible across standard libraries.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& s : s_) s = sm.next();
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_open_zero() { return 1.0 - uniform(); }

    /// Exponential with the given rate (> 0).
    double exponential(double rate) { return -std::log(uniform_open_zero()) / rate; }

    /// Standard normal via Box-Muller (one draw per call).
    double normal() {
        const double u1 = uniform_open_zero();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> s_{};
};

}  // namespace bikeshare
