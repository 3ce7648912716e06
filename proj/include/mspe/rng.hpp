#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mspe {

/// Counter-based deterministic RNG (SplitMix64 core). A stream is fully
/// determined by its key, so independent streams can be derived per
/// (epoch, step, branch) and parallel schedules cannot change the draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// Derives an independent stream from a seed and up to three counters.
    static Rng stream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
        std::uint64_t k = seed;
        k = mix(k ^ (0x9e3779b97f4a7c15ULL + a));
        k = mix(k ^ (0xbf58476d1ce4e5b9ULL + b));
        k = mix(k ^ (0x94d049bb133111ebULL + c));
        return Rng(k);
    }

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free modulo is fine here: n is tiny relative to 2^64.
        return next() % n;
    }

    /// Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename Container>
    void shuffle(Container& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

} // namespace mspe
