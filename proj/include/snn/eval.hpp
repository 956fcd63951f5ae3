#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "snn/error.hpp"

namespace snn {

using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Root-mean-square error of the ensemble mean against `truth` over
/// `eval_indices` (columns of `samples`, entries of `truth`).
inline double rmse(const SampleMatrix& samples, const Eigen::VectorXd& truth, std::span<const std::size_t> eval_indices) {
    if (eval_indices.empty()) throw ConfigError("rmse: empty evaluation set");
    if (samples.rows() < 1) throw ConfigError("rmse: empty ensemble");
    double sum = 0.0;
    for (std::size_t j : eval_indices) {
        const auto c = static_cast<Eigen::Index>(j);
        const double err = samples.col(c).mean() - truth(c);
        sum += err * err;
    }
    return std::sqrt(sum / static_cast<double>(eval_indices.size()));
}

/// Empirical-CDF CRPS of an ensemble {x_k} for observation y:
///   (1/M) Σ_k |x_k - y| - (1/(2M²)) Σ_k Σ_j |x_k - x_j|.
/// The double sum is evaluated in O(M log M) from the sorted ensemble.
inline double crps_ensemble(std::span<const double> samples, double truth) {
    if (samples.empty()) throw ConfigError("crps_ensemble: empty ensemble");
    std::vector<double> x(samples.begin(), samples.end());
    std::sort(x.begin(), x.end());
    const auto m = static_cast<double>(x.size());
    double abs_err = 0.0;
    double spread = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        abs_err += std::abs(x[i] - truth);
        spread += (2.0 * static_cast<double>(i) - m + 1.0) * x[i];
    }
    // Σ_k Σ_j |x_k - x_j| = 2 Σ_i (2i - M + 1) x_(i)
    return abs_err / m - spread / (m * m);
}

struct ScoreReport {
    double rmse = 0.0;
    double crps = 0.0;
    std::size_t n_eval = 0;
    std::vector<double> squared_error;  // per coordinate, (mean - truth)²
    std::vector<double> crps_per_site;
};

/// RMSE of the ensemble mean and mean CRPS over `eval_indices`.
inline ScoreReport score(const SampleMatrix& samples, const Eigen::VectorXd& truth,
                         std::span<const std::size_t> eval_indices) {
    if (eval_indices.empty()) throw ConfigError("score: empty evaluation set");
    ScoreReport report;
    report.n_eval = eval_indices.size();
    std::vector<double> column(static_cast<std::size_t>(samples.rows()));
    double sq = 0.0;
    double cr = 0.0;
    for (std::size_t j : eval_indices) {
        const auto c = static_cast<Eigen::Index>(j);
        for (Eigen::Index k = 0; k < samples.rows(); ++k) column[static_cast<std::size_t>(k)] = samples(k, c);
        const double err = samples.col(c).mean() - truth(c);
        const double site = crps_ensemble(column, truth(c));
        report.squared_error.push_back(err * err);
        report.crps_per_site.push_back(site);
        sq += err * err;
        cr += site;
    }
    const auto n = static_cast<double>(eval_indices.size());
    report.rmse = std::sqrt(sq / n);
    report.crps = cr / n;
    return report;
}

/// Linear-interpolation quantile of sorted data at probability p in [0, 1].
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw ConfigError("quantile_sorted: empty sample");
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct QuantilePair {
    double probability;
    double a;
    double b;
};

/// QQ table of two sorted samples with as many rows as the shorter one; the
/// longer sample is interpolated at the shorter one's plotting positions.
inline std::vector<QuantilePair> qq_data(std::span<const double> sorted_a, std::span<const double> sorted_b) {
    if (sorted_a.empty() || sorted_b.empty()) throw ConfigError("qq_data: empty sample");
    const std::size_t n = std::min(sorted_a.size(), sorted_b.size());
    std::vector<QuantilePair> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1);
        out.push_back({p, quantile_sorted(sorted_a, p), quantile_sorted(sorted_b, p)});
    }
    return out;
}

/// QQ table at chosen probabilities.
inline std::vector<QuantilePair> qq_at(std::span<const double> sorted_a, std::span<const double> sorted_b,
                                       std::span<const double> probabilities) {
    std::vector<QuantilePair> out;
    out.reserve(probabilities.size());
    for (double p : probabilities) out.push_back({p, quantile_sorted(sorted_a, p), quantile_sorted(sorted_b, p)});
    return out;
}

inline double max_quantile_deviation(const std::vector<QuantilePair>& table) {
    double worst = 0.0;
    for (const auto& row : table) worst = std::max(worst, std::abs(row.a - row.b));
    return worst;
}

struct KsResult {
    double statistic;
    double p_value;
};

/// Asymptotic Kolmogorov distribution tail Q(λ) = 2 Σ (-1)^{j-1} exp(-2 j² λ²).
inline double kolmogorov_tail(double lambda) {
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-12 * std::abs(sum)) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Two-sample Kolmogorov–Smirnov statistic with its asymptotic p-value.
inline KsResult ks_statistic(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw ConfigError("ks_statistic: empty sample");
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const auto na = static_cast<double>(x.size());
    const auto nb = static_cast<double>(y.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] == v) ++i;
        while (j < y.size() && y[j] == v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double en = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_tail((en + 0.12 + 0.11 / en) * d)};
}

}  // namespace snn
