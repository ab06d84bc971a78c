#pragma once

#include "sksim/errors.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace sksim::stats {

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
};

/// Sample mean and sample-std / sqrt(n).
inline MeanEstimate mean_and_error(std::span<const double> values) {
    if (values.empty()) throw PreconditionError("no samples");
    const auto n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double var = values.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n), values.size()};
}

/// P(D > d) for the two-sided one-sample Kolmogorov-Smirnov statistic with
/// Stephens' small-sample correction.
inline double ks_p_value(double d, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    if (lambda <= 0.0) return 1.0;
    if (lambda < 1.18) {
        // small-lambda form of the Kolmogorov CDF
        const double y = std::exp(-std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda));
        double s = 0.0;
        for (int k = 1; k <= 50; ++k) s += std::pow(y, (2 * k - 1) * (2 * k - 1));
        return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
    }
    double q = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        q += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-17) break;
    }
    return std::clamp(q, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// One-sample KS test of `u` against Uniform(0, 1).
inline KsResult ks_uniform(std::vector<double> u) {
    if (u.empty()) throw PreconditionError("KS test needs samples");
    std::sort(u.begin(), u.end());
    const auto n = static_cast<double>(u.size());
    double d = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        d = std::max({d, hi - u[i], u[i] - lo});
    }
    return {d, ks_p_value(d, u.size())};
}

/// Randomized probability integral transform of a count under Poisson(lambda):
/// F(n - 1) + v * pmf(n), uniform on (0, 1) when n ~ Poisson(lambda).
inline double poisson_pit(double lambda, std::int64_t n, double v) {
    if (n < 0) throw PreconditionError("negative count");
    if (lambda <= 0.0) return n == 0 ? v : 1.0;
    const boost::math::poisson_distribution<double> dist(lambda);
    const double below = n == 0 ? 0.0 : boost::math::cdf(dist, static_cast<double>(n - 1));
    const double at = boost::math::pdf(dist, static_cast<double>(n));
    return std::min(1.0, below + v * at);
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw PreconditionError("correlation needs matched samples");
    const auto n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

/// Upper-tail chi-square probability.
inline double chi_square_sf(double x, double dof) {
    const boost::math::chi_squared_distribution<double> dist(dof);
    return boost::math::cdf(boost::math::complement(dist, x));
}

}  // namespace sksim::stats
