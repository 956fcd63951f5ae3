#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "snn/error.hpp"

namespace snn {

inline constexpr std::size_t kNoIndex = std::numeric_limits<std::size_t>::max();

/// Diagonal jitter escalation for near-singular blocks: try A as is, then
/// A + initial_scale * tr(A)/dim * I, growing by `growth` per retry.
struct JitterPolicy {
    double initial_scale = 1e-10;
    double growth = 10.0;
    int max_retries = 3;
};

struct CholeskyResult {
    Eigen::MatrixXd lower;
    double jitter = 0.0;  // amount added to the diagonal, 0 if none
    int retries = 0;
};

/// Lower Cholesky factor of a symmetric matrix with jitter escalation.
/// `index` names the ordered position being processed, for error reports.
inline CholeskyResult cholesky(const Eigen::MatrixXd& a, std::size_t index = kNoIndex, JitterPolicy policy = {}) {
    if (a.rows() != a.cols()) {
        throw ConfigError("cholesky: matrix is not square");
    }
    const auto dim = a.rows();
    if (dim == 0) {
        return {Eigen::MatrixXd(0, 0), 0.0, 0};
    }
    if (!a.allFinite()) {
        throw FactorizationError("cholesky: non-finite entries" +
                                     (index == kNoIndex ? std::string() : " at index " + std::to_string(index)),
                                 index);
    }
    const double base = policy.initial_scale * std::abs(a.trace()) / static_cast<double>(dim);
    double jitter = 0.0;
    for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
        if (attempt > 0) {
            jitter = attempt == 1 ? base : jitter * policy.growth;
        }
        Eigen::MatrixXd shifted = a;
        shifted.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success) {
            Eigen::MatrixXd lower = llt.matrixL();
            if (lower.diagonal().minCoeff() > 0.0 && lower.allFinite()) {
                return {std::move(lower), jitter, attempt};
            }
        }
    }
    throw FactorizationError(
        "cholesky: matrix not positive definite after jitter " + std::to_string(jitter) +
            (index == kNoIndex ? std::string() : " at index " + std::to_string(index)),
        index);
}

/// Conditional Gaussian of z_l given z_p for zero-mean (z_l, z_p):
///   V = Σ_lp Σ_pp⁻¹,  Σ̃ = Σ_ll − V Σ_pl,  chol = lower factor of Σ̃.
struct ConditionalFactors {
    Eigen::MatrixXd weights;      // V, |l| x |p|
    Eigen::MatrixXd covariance;   // Σ̃, |l| x |l|
    Eigen::MatrixXd chol;         // lower factor of Σ̃
    double jitter = 0.0;          // largest jitter used in either factorization
};

/// Σ_pp⁻¹ is only ever applied through triangular solves with its factor.
inline ConditionalFactors conditional_factors(const Eigen::MatrixXd& sigma_ll, const Eigen::MatrixXd& sigma_lp,
                                              const Eigen::MatrixXd& sigma_pp, std::size_t index = kNoIndex,
                                              JitterPolicy policy = {}) {
    ConditionalFactors out;
    const auto nl = sigma_ll.rows();
    const auto np = sigma_pp.rows();
    if (sigma_lp.rows() != nl || sigma_lp.cols() != np) {
        throw ConfigError("conditional_factors: block dimensions disagree");
    }
    if (np == 0) {
        out.weights.resize(nl, 0);
        out.covariance = sigma_ll;
    } else {
        const CholeskyResult pp = cholesky(sigma_pp, index, policy);
        const auto lp = pp.lower.triangularView<Eigen::Lower>();
        const Eigen::MatrixXd w = lp.solve(sigma_lp.transpose());                      // Lp⁻¹ Σ_pl
        out.weights = lp.transpose().solve(w).transpose();                             // Σ_lp Σ_pp⁻¹
        Eigen::MatrixXd cov = sigma_ll - w.transpose() * w;
        out.covariance = 0.5 * (cov + cov.transpose());
        out.jitter = pp.jitter;
    }
    CholeskyResult ll = cholesky(out.covariance, index, policy);
    out.chol = std::move(ll.lower);
    out.jitter = std::max(out.jitter, ll.jitter);
    return out;
}

}  // namespace snn
