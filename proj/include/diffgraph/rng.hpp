#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "diffgraph/common.hpp"

namespace diffgraph {

// Deterministic RNG: mt19937_64 (whose output sequence is fixed by the
// standard) plus hand-rolled distributions. std::*_distribution is
// implementation-defined, so none of them are used here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Derives an independent child stream; mixing keeps substreams decorrelated
    // even for adjacent tags.
    Rng fork(std::uint64_t tag) {
        std::uint64_t s = next_u64();
        s ^= 0x9e3779b97f4a7c15ull * (tag + 1);
        return Rng(s);
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // k in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // modulo bias is irrelevant at the pool sizes used here
        return eng_() % n;
    }

    // Standard normal via Box-Muller (no state carried between calls, so the
    // draw count per call is fixed and reproducible).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Marsaglia-Tsang squeeze method; requires shape >= 1 (always true for the
    // Beta(alpha, beta) users here, where alpha, beta > 1).
    double gamma(double shape) {
        require(shape >= 1.0, errc::invalid_argument, "gamma shape must be >= 1");
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // Two-Gamma construction: X/(X+Y) ~ Beta(a, b). Result clamped into the
    // open interval so downstream log(w) and log(1-w) stay finite.
    double beta(double a, double b) {
        double x = gamma(a);
        double y = gamma(b);
        double w = x / (x + y);
        const double eps = 1e-12;
        if (w < eps) w = eps;
        if (w > 1.0 - eps) w = 1.0 - eps;
        return w;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

} // namespace diffgraph
