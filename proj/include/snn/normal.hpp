#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/special_functions/erf.hpp>

#include "snn/error.hpp"
#include "snn/rng.hpp"

namespace snn {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Standard normal density.
inline double std_normal_pdf(double x) noexcept {
    return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

/// Standard normal CDF, accurate in both tails (erfc based).
inline double std_normal_cdf(double x) noexcept {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Standard normal quantile. Throws ConfigError unless 0 < p < 1.
inline double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ConfigError("std_normal_quantile: probability must lie in (0, 1), got " + std::to_string(p));
    }
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// log P(Z > x) for Z ~ N(0, 1), finite for every finite x.
inline double log_upper_tail(double x) noexcept {
    if (x == kInf) {
        return -kInf;
    }
    if (x < 30.0) {
        return std::log(0.5 * std::erfc(x / std::numbers::sqrt2));
    }
    // Mills-ratio asymptotic series; relative error below 1e-13 for x >= 30.
    const double r = 1.0 / (x * x);
    const double series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r * (1.0 - 9.0 * r))));
    return -0.5 * x * x - std::log(x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

/// log P(lo < Z < hi) for Z ~ N(0, 1), stable when the interval sits deep in
/// either tail. Returns -inf for an empty interval.
inline double log_normal_interval(double lo, double hi) noexcept {
    if (!(lo < hi)) {
        return -kInf;
    }
    if (lo > 0.0) {
        const double pa = log_upper_tail(lo);
        const double pb = log_upper_tail(hi);
        return pa + std::log1p(-std::exp(pb - pa));
    }
    if (hi < 0.0) {
        const double pa = log_upper_tail(-lo);
        const double pb = log_upper_tail(-hi);
        return pb + std::log1p(-std::exp(pa - pb));
    }
    const double lower_tail = 0.5 * std::erfc(-lo / std::numbers::sqrt2);
    const double upper_tail = 0.5 * std::erfc(hi / std::numbers::sqrt2);
    return std::log1p(-lower_tail - upper_tail);
}

/// Mean of N(0, 1) restricted to (lo, hi); always strictly inside the interval
/// up to rounding.
inline double truncated_std_mean(double lo, double hi) noexcept {
    const double log_mass = log_normal_interval(lo, hi);
    const double c = 0.5 * std::log(2.0 * std::numbers::pi);
    const double pl = std::isinf(lo) ? 0.0 : std::exp(-0.5 * lo * lo - log_mass - c);
    const double pu = std::isinf(hi) ? 0.0 : std::exp(-0.5 * hi * hi - log_mass - c);
    return std::clamp(pl - pu, lo, hi);
}

namespace detail {

// Distance (in standard deviations) beyond which inverse-CDF sampling is
// replaced by rejection from an exponential proposal.
inline constexpr double kTailThreshold = 6.0;

// N(0,1) restricted to [lo, hi] with lo >= kTailThreshold.
inline double sample_right_tail(double lo, double hi, Rng& rng) {
    if (hi - lo < 1.0 / lo) {
        // Narrow interval: uniform proposal, acceptance >= exp(-(hi-lo)(hi+lo)/2) > e^-1.5.
        for (;;) {
            const double x = lo + (hi - lo) * rng.uniform();
            if (std::log(rng.uniform()) <= -0.5 * (x * x - lo * lo)) {
                return x;
            }
        }
    }
    const double rate = 0.5 * (lo + std::sqrt(lo * lo + 4.0));
    for (;;) {
        const double x = lo + rng.exponential() / rate;
        if (x > hi) {
            continue;
        }
        const double d = x - rate;
        if (std::log(rng.uniform()) <= -0.5 * d * d) {
            return x;
        }
    }
}

}  // namespace detail

/// Draw from N(0, 1) restricted to [lo, hi]; requires lo < hi.
inline double sample_truncated_std(double lo, double hi, Rng& rng) {
    double x = 0.0;
    if (lo >= detail::kTailThreshold) {
        x = detail::sample_right_tail(lo, hi, rng);
    } else if (hi <= -detail::kTailThreshold) {
        x = -detail::sample_right_tail(-hi, -lo, rng);
    } else if (lo > 0.0) {
        // Work in the upper tail so that Φ(lo) close to 1 keeps its precision.
        const double qa = 0.5 * std::erfc(lo / std::numbers::sqrt2);
        const double qb = 0.5 * std::erfc(hi / std::numbers::sqrt2);
        for (;;) {
            const double u = qb + (qa - qb) * rng.uniform();
            if (u > 0.0 && u < 1.0) {
                x = -std_normal_quantile(u);
                break;
            }
        }
    } else {
        const double pa = std_normal_cdf(lo);
        const double pb = std_normal_cdf(hi);
        for (;;) {
            const double u = pa + (pb - pa) * rng.uniform();
            if (u > 0.0 && u < 1.0) {
                x = std_normal_quantile(u);
                break;
            }
        }
    }
    return std::clamp(x, lo, hi);
}

/// Exact draw from N(mu, sigma²) restricted to [lo, hi]. Bounds may be
/// infinite; lo < hi is required (equality constraints are not sampled).
inline double sample_truncated_univariate(double mu, double sigma, double lo, double hi, Rng& rng) {
    if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mu)) {
        throw ConfigError("sample_truncated_univariate: need finite mu and sigma > 0");
    }
    if (!(lo < hi)) {
        throw ConfigError("sample_truncated_univariate: empty or degenerate interval [" + std::to_string(lo) +
                          ", " + std::to_string(hi) + "]");
    }
    const double z = sample_truncated_std((lo - mu) / sigma, (hi - mu) / sigma, rng);
    return std::clamp(mu + sigma * z, lo, hi);
}

}  // namespace snn
