#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snn/error.hpp"
#include "snn/linalg.hpp"
#include "snn/normal.hpp"
#include "snn/rng.hpp"

namespace snn {

/// TN(lower, upper; Σ) with Σ = chol·cholᵀ and zero mean.
struct LowDimTarget {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    Eigen::MatrixXd chol;

    std::size_t dim() const noexcept { return static_cast<std::size_t>(lower.size()); }

    static LowDimTarget from_covariance(Eigen::VectorXd lower, Eigen::VectorXd upper, const Eigen::MatrixXd& sigma) {
        LowDimTarget t{std::move(lower), std::move(upper), cholesky(sigma).lower};
        t.validate();
        return t;
    }

    Eigen::MatrixXd covariance() const { return chol * chol.transpose(); }

    void validate() const {
        const auto q = lower.size();
        if (q < 1) throw ConfigError("LowDimTarget: dimension must be at least 1");
        if (upper.size() != q || chol.rows() != q || chol.cols() != q) {
            throw ConfigError("LowDimTarget: bound and factor dimensions disagree");
        }
        if (!chol.allFinite()) throw ConfigError("LowDimTarget: non-finite covariance factor");
        for (Eigen::Index k = 0; k < q; ++k) {
            if (!(lower(k) < upper(k))) {
                throw ConfigError("LowDimTarget: lower bound must be strictly below upper bound in coordinate " +
                                  std::to_string(k));
            }
            if (!(chol(k, k) > 0.0)) throw ConfigError("LowDimTarget: factor needs a positive diagonal");
        }
    }

    bool contains(const Eigen::VectorXd& z) const {
        return z.size() == lower.size() && (z.array() >= lower.array()).all() && (z.array() <= upper.array()).all();
    }
};

struct SamplerPolicy {
    double min_accept = 1e-3;    // fall back to Gibbs below this acceptance rate
    int trial_window = 200;      // proposals observed before judging the rate
    int gibbs_burnin = -1;       // sweeps for the fallback; -1 means 100 * dim
    int newton_max_iter = 50;
    bool reorder = true;         // sort coordinates by truncation severity
    bool tilt = true;            // false gives the plain separation-of-variables proposal
};

/// Counters accumulated over calls; `accepted + fallbacks` equals the number
/// of draws returned by sample_lowdim_tmvn.
struct SamplerTelemetry {
    std::uint64_t draws = 0;
    std::uint64_t proposals = 0;
    std::uint64_t accepted = 0;
    std::uint64_t fallbacks = 0;
    std::uint64_t tilt_failures = 0;

    SamplerTelemetry& operator+=(const SamplerTelemetry& o) noexcept {
        draws += o.draws;
        proposals += o.proposals;
        accepted += o.accepted;
        fallbacks += o.fallbacks;
        tilt_failures += o.tilt_failures;
        return *this;
    }

    double acceptance_rate() const noexcept {
        return proposals == 0 ? 1.0 : static_cast<double>(accepted) / static_cast<double>(proposals);
    }
};

/// Separation-of-variables proposal for TN(l, u; Σ) with exponential tilting.
///
/// With Σ = D(I + L)(D(I + L))ᵀ after a coordinate permutation, the target is
/// the law of x ~ N(0, I) restricted to l̃ <= (I + L)x <= ũ (bounds scaled by
/// D). Coordinate k of the proposal is N(μ_k, 1) truncated to the interval left
/// open by x_1..x_{k-1}. The log importance weight is
///
///   ψ(x; μ) = Σ_k  log P(l̃_k - μ_k - c_k < Z < ũ_k - μ_k - c_k) + μ_k²/2 - μ_k x_k,
///
/// c = L x. ψ is concave in x, so at a saddle point (x*, μ*) of ψ the value
/// ψ* = ψ(x*; μ*) bounds ψ(·; μ*) from above and accept-reject with
/// probability exp(ψ - ψ*) is exact. μ = 0 with bound 0 is always valid.
class TiltedProposal {
public:
    TiltedProposal(const LowDimTarget& target, const SamplerPolicy& policy) {
        target.validate();
        const auto q = static_cast<Eigen::Index>(target.dim());
        Eigen::MatrixXd full;
        if (!(policy.reorder && q > 1 && pivoted_factor(target, full))) {
            full = target.chol;
            perm_.resize(static_cast<std::size_t>(q));
            std::iota(perm_.begin(), perm_.end(), std::size_t{0});
            lo_ = target.lower;
            hi_ = target.upper;
        }
        scale_ = full.diagonal();
        strict_ = full;
        for (Eigen::Index k = 0; k < q; ++k) {
            strict_.row(k) /= scale_(k);
            strict_(k, k) = 0.0;
        }
        strict_ = strict_.triangularView<Eigen::StrictlyLower>();
        lo_ = lo_.cwiseQuotient(scale_);
        hi_ = hi_.cwiseQuotient(scale_);
        lower_ = target.lower;
        upper_ = target.upper;
        tilt_ = Eigen::VectorXd::Zero(q);
        bound_ = 0.0;
        if (policy.tilt && q > 1) {
            tilted_ = solve_saddle_point(policy.newton_max_iter);
        }
    }

    std::size_t dim() const noexcept { return static_cast<std::size_t>(lo_.size()); }
    bool tilted() const noexcept { return tilted_; }
    const Eigen::VectorXd& tilt() const noexcept { return tilt_; }
    double log_bound() const noexcept { return bound_; }
    const std::vector<std::size_t>& permutation() const noexcept { return perm_; }

    /// ψ(x; μ) for a point x of the proposal space under this proposal's tilt.
    double log_weight(const Eigen::VectorXd& x) const { return psi(x, tilt_); }

    /// ψ(x; μ) for an arbitrary tilt; the last entry of both is ignored.
    double psi(Eigen::VectorXd x, Eigen::VectorXd mu) const {
        const auto q = lo_.size();
        x(q - 1) = 0.0;
        mu(q - 1) = 0.0;
        const Eigen::VectorXd c = strict_ * x;
        double total = 0.0;
        for (Eigen::Index k = 0; k < q; ++k) {
            total += log_normal_interval(lo_(k) - mu(k) - c(k), hi_(k) - mu(k) - c(k)) + 0.5 * mu(k) * mu(k) -
                     x(k) * mu(k);
        }
        return total;
    }

    /// One proposal draw; returns the log weight ψ and fills `x`.
    double propose(Rng& rng, Eigen::VectorXd& x) const {
        const auto q = lo_.size();
        x.resize(q);
        double log_w = 0.0;
        for (Eigen::Index k = 0; k < q; ++k) {
            const double col = k == 0 ? 0.0 : strict_.row(k).head(k).dot(x.head(k));
            const double tl = lo_(k) - tilt_(k) - col;
            const double tu = hi_(k) - tilt_(k) - col;
            x(k) = tilt_(k) + sample_truncated_std(tl, tu, rng);
            log_w += log_normal_interval(tl, tu) + 0.5 * tilt_(k) * tilt_(k) - tilt_(k) * x(k);
        }
        return log_w;
    }

    /// Sequential truncated means: a point strictly inside the support.
    Eigen::VectorXd interior_point() const {
        const auto q = lo_.size();
        Eigen::VectorXd x(q);
        for (Eigen::Index k = 0; k < q; ++k) {
            const double col = k == 0 ? 0.0 : strict_.row(k).head(k).dot(x.head(k));
            x(k) = tilt_(k) + truncated_std_mean(lo_(k) - tilt_(k) - col, hi_(k) - tilt_(k) - col);
        }
        return x;
    }

    /// Map a proposal-space point back to the target's coordinates.
    Eigen::VectorXd to_target(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd permuted = scale_.cwiseProduct(x + strict_ * x);
        Eigen::VectorXd z(permuted.size());
        for (std::size_t k = 0; k < perm_.size(); ++k) {
            z(static_cast<Eigen::Index>(perm_[k])) = permuted(static_cast<Eigen::Index>(k));
        }
        return z.cwiseMax(lower_).cwiseMin(upper_);
    }

private:
    // Cholesky with Genz-style variable reordering: at each step take the
    // remaining coordinate whose conditional interval has the least mass.
    bool pivoted_factor(const LowDimTarget& target, Eigen::MatrixXd& full) {
        const auto q = static_cast<Eigen::Index>(target.dim());
        Eigen::MatrixXd sigma = target.covariance();
        Eigen::MatrixXd l = Eigen::MatrixXd::Zero(q, q);
        Eigen::VectorXd z = Eigen::VectorXd::Zero(q);
        Eigen::VectorXd lo = target.lower;
        Eigen::VectorXd hi = target.upper;
        std::vector<std::size_t> perm(static_cast<std::size_t>(q));
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (Eigen::Index j = 0; j < q; ++j) {
            Eigen::Index pick = j;
            double least = kInf;
            for (Eigen::Index i = j; i < q; ++i) {
                const double s2 = sigma(i, i) - l.row(i).head(j).squaredNorm();
                const double s = std::sqrt(std::max(s2, 1e-300));
                const double c = l.row(i).head(j).dot(z.head(j));
                const double pr = log_normal_interval((lo(i) - c) / s, (hi(i) - c) / s);
                if (pr < least) {
                    least = pr;
                    pick = i;
                }
            }
            if (pick != j) {
                sigma.row(j).swap(sigma.row(pick));
                sigma.col(j).swap(sigma.col(pick));
                l.row(j).swap(l.row(pick));
                std::swap(lo(j), lo(pick));
                std::swap(hi(j), hi(pick));
                std::swap(perm[static_cast<std::size_t>(j)], perm[static_cast<std::size_t>(pick)]);
            }
            const double s2 = sigma(j, j) - l.row(j).head(j).squaredNorm();
            if (!(s2 > 0.0) || !std::isfinite(s2)) {
                return false;
            }
            l(j, j) = std::sqrt(s2);
            for (Eigen::Index i = j + 1; i < q; ++i) {
                l(i, j) = (sigma(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
            }
            const double c = l.row(j).head(j).dot(z.head(j));
            z(j) = truncated_std_mean((lo(j) - c) / l(j, j), (hi(j) - c) / l(j, j));
        }
        full = std::move(l);
        perm_ = std::move(perm);
        lo_ = std::move(lo);
        hi_ = std::move(hi);
        return true;
    }

    // Gradient of ψ in (x_1..x_{q-1}, μ_1..μ_{q-1}) and its Jacobian.
    void gradient(const Eigen::VectorXd& y, Eigen::VectorXd& grad, Eigen::MatrixXd* jac) const {
        const auto q = lo_.size();
        const auto r = q - 1;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(q);
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(q);
        x.head(r) = y.head(r);
        mu.head(r) = y.tail(r);
        const Eigen::VectorXd c = strict_ * x;
        Eigen::VectorXd p(q);
        Eigen::VectorXd dp(q);
        const double log_root_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
        for (Eigen::Index k = 0; k < q; ++k) {
            const double lt = lo_(k) - mu(k) - c(k);
            const double ut = hi_(k) - mu(k) - c(k);
            const double w = log_normal_interval(lt, ut);
            const double pl = std::isinf(lt) ? 0.0 : std::exp(-0.5 * lt * lt - w - log_root_2pi);
            const double pu = std::isinf(ut) ? 0.0 : std::exp(-0.5 * ut * ut - w - log_root_2pi);
            p(k) = pl - pu;
            const double lt0 = std::isinf(lt) ? 0.0 : lt;
            const double ut0 = std::isinf(ut) ? 0.0 : ut;
            dp(k) = -p(k) * p(k) + lt0 * pl - ut0 * pu;
        }
        grad.resize(2 * r);
        grad.head(r) = (-mu + strict_.transpose() * p).head(r);
        grad.tail(r) = (mu - x + p).head(r);
        if (jac != nullptr) {
            const Eigen::MatrixXd dl = dp.asDiagonal() * strict_;
            const Eigen::MatrixXd mx = -Eigen::MatrixXd::Identity(q, q) + dl;
            const Eigen::MatrixXd xx = strict_.transpose() * dl;
            jac->resize(2 * r, 2 * r);
            jac->topLeftCorner(r, r) = xx.topLeftCorner(r, r);
            jac->topRightCorner(r, r) = mx.topLeftCorner(r, r).transpose();
            jac->bottomLeftCorner(r, r) = mx.topLeftCorner(r, r);
            jac->bottomRightCorner(r, r).setZero();
            jac->bottomRightCorner(r, r).diagonal() = (Eigen::VectorXd::Ones(r) + dp.head(r));
        }
    }

    // Damped Newton on ∇ψ = 0 from the origin. On failure the tilt stays at
    // zero with bound 0.
    bool solve_saddle_point(int max_iter) {
        const auto q = lo_.size();
        const auto r = q - 1;
        Eigen::VectorXd y = Eigen::VectorXd::Zero(2 * r);
        Eigen::VectorXd grad;
        Eigen::MatrixXd jac;
        gradient(y, grad, &jac);
        double merit = grad.squaredNorm();
        bool converged = merit < 1e-10;
        for (int iter = 0; iter < max_iter && !converged; ++iter) {
            if (!grad.allFinite() || !jac.allFinite()) return false;
            const Eigen::VectorXd step = jac.partialPivLu().solve(-grad);
            if (!step.allFinite()) return false;
            double t = 1.0;
            bool improved = false;
            for (int half = 0; half < 30; ++half, t *= 0.5) {
                const Eigen::VectorXd trial = y + t * step;
                Eigen::VectorXd trial_grad;
                gradient(trial, trial_grad, nullptr);
                const double trial_merit = trial_grad.squaredNorm();
                if (std::isfinite(trial_merit) && trial_merit < merit) {
                    y = trial;
                    improved = true;
                    break;
                }
            }
            if (!improved) return false;
            gradient(y, grad, &jac);
            merit = grad.squaredNorm();
            converged = merit < 1e-10;
        }
        if (!converged) return false;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(q);
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(q);
        x.head(r) = y.head(r);
        mu.head(r) = y.tail(r);
        const double bound = psi(x, mu);
        if (!std::isfinite(bound)) return false;
        tilt_ = mu;
        bound_ = bound;
        return true;
    }

    std::vector<std::size_t> perm_;
    Eigen::VectorXd scale_;
    Eigen::MatrixXd strict_;
    Eigen::VectorXd lo_, hi_;
    Eigen::VectorXd lower_, upper_;
    Eigen::VectorXd tilt_;
    double bound_ = 0.0;
    bool tilted_ = false;
};

/// Systematic-scan Gibbs sampler on TN(l, u; Σ). Each full conditional is a
/// univariate truncated normal read off the precision matrix.
class GibbsSampler {
public:
    GibbsSampler(const LowDimTarget& target, const Eigen::VectorXd& start)
        : lower_(target.lower), upper_(target.upper), state_(start) {
        target.validate();
        if (start.size() != target.lower.size()) throw ConfigError("GibbsSampler: start has wrong dimension");
        const auto q = target.lower.size();
        const Eigen::MatrixXd inv_chol =
            target.chol.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(q, q));
        precision_ = inv_chol.transpose() * inv_chol;
        state_ = state_.cwiseMax(lower_).cwiseMin(upper_);
        refresh();
    }

    void sweep(Rng& rng) {
        const auto q = state_.size();
        for (Eigen::Index j = 0; j < q; ++j) {
            const double qjj = precision_(j, j);
            const double mean = state_(j) - residual_(j) / qjj;
            const double value = sample_truncated_univariate(mean, 1.0 / std::sqrt(qjj), lower_(j), upper_(j), rng);
            const double delta = value - state_(j);
            if (delta != 0.0) {
                residual_ += delta * precision_.col(j);
                state_(j) = value;
            }
        }
        if (++sweeps_ % 64 == 0) refresh();
    }

    const Eigen::VectorXd& state() const noexcept { return state_; }

private:
    void refresh() { residual_ = precision_ * state_; }

    Eigen::VectorXd lower_, upper_;
    Eigen::VectorXd state_;
    Eigen::MatrixXd precision_;
    Eigen::VectorXd residual_;
    std::uint64_t sweeps_ = 0;
};

/// A point strictly inside [lower, upper] built from sequential truncated means.
inline Eigen::VectorXd feasible_start(const LowDimTarget& target) {
    SamplerPolicy plain;
    plain.tilt = false;
    plain.reorder = false;
    const TiltedProposal proposal(target, plain);
    return proposal.to_target(proposal.interior_point());
}

/// Exact draw from a low-dimensional TMVN. Dimension one goes straight to the
/// univariate sampler; otherwise tilted accept-reject, with a Gibbs fallback
/// when a full trial window of proposals is rejected and min_accept > 0.
inline Eigen::VectorXd sample_lowdim_tmvn(const LowDimTarget& target, Rng& rng, const SamplerPolicy& policy = {},
                                          SamplerTelemetry* telemetry = nullptr) {
    target.validate();
    SamplerTelemetry local;
    SamplerTelemetry& tel = telemetry != nullptr ? *telemetry : local;
    ++tel.draws;
    if (target.dim() == 1) {
        ++tel.proposals;
        ++tel.accepted;
        Eigen::VectorXd z(1);
        z(0) = sample_truncated_univariate(0.0, target.chol(0, 0), target.lower(0), target.upper(0), rng);
        return z;
    }
    const TiltedProposal proposal(target, policy);
    if (policy.tilt && !proposal.tilted()) ++tel.tilt_failures;
    Eigen::VectorXd x;
    const auto window = static_cast<std::uint64_t>(std::max(policy.trial_window, 1));
    for (std::uint64_t tried = 1;; ++tried) {
        const double log_w = proposal.propose(rng, x);
        ++tel.proposals;
        if (std::log(rng.uniform()) < log_w - proposal.log_bound()) {
            ++tel.accepted;
            return proposal.to_target(x);
        }
        // Nothing accepted so far, so the observed rate is zero.
        if (tried % window == 0 && policy.min_accept > 0.0) break;
    }
    ++tel.fallbacks;
    GibbsSampler gibbs(target, proposal.to_target(proposal.interior_point()));
    const int sweeps = policy.gibbs_burnin >= 0 ? policy.gibbs_burnin : 100 * static_cast<int>(target.dim());
    for (int s = 0; s < sweeps; ++s) gibbs.sweep(rng);
    return gibbs.state();
}

/// Naive rejection: z = chol·ε until lower <= z <= upper. Exact, but only
/// usable when the acceptance probability is not tiny.
inline Eigen::VectorXd sample_rejection_oracle(const LowDimTarget& target, Rng& rng,
                                               std::uint64_t max_tries = 10'000'000) {
    target.validate();
    const auto q = target.lower.size();
    Eigen::VectorXd eps(q);
    for (std::uint64_t t = 0; t < max_tries; ++t) {
        for (Eigen::Index k = 0; k < q; ++k) eps(k) = rng.normal();
        const Eigen::VectorXd z = target.chol.triangularView<Eigen::Lower>() * eps;
        if (target.contains(z)) return z;
    }
    throw NumericalError("sample_rejection_oracle: no acceptance in " + std::to_string(max_tries) + " tries");
}

/// `count` Gibbs states taken every `thin` sweeps after `burnin` sweeps.
inline std::vector<Eigen::VectorXd> sample_gibbs_oracle(const LowDimTarget& target, Rng& rng, int burnin, int thin,
                                                        std::size_t count,
                                                        const std::optional<Eigen::VectorXd>& start = std::nullopt) {
    GibbsSampler gibbs(target, start ? *start : feasible_start(target));
    for (int s = 0; s < burnin; ++s) gibbs.sweep(rng);
    std::vector<Eigen::VectorXd> out;
    out.reserve(count);
    const int step = std::max(thin, 1);
    for (std::size_t k = 0; k < count; ++k) {
        for (int s = 0; s < step; ++s) gibbs.sweep(rng);
        out.push_back(gibbs.state());
    }
    return out;
}

}  // namespace snn
