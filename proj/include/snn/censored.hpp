#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snn/error.hpp"
#include "snn/geometry.hpp"
#include "snn/kdtree.hpp"
#include "snn/kernel.hpp"
#include "snn/linalg.hpp"
#include "snn/parallel.hpp"
#include "snn/snn.hpp"

namespace snn {

enum class SiteStatus { observed, censored };

/// Partially censored GP data. Observed sites carry a value; censored sites
/// carry an interval [lower, upper) with lower < upper (lower = -inf for
/// left-censoring below a detection limit `upper`).
struct CensoredDataset {
    LocationSet locations;
    Eigen::VectorXd values;   // NaN where no value is recorded
    std::vector<SiteStatus> status;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    std::size_t size() const noexcept { return status.size(); }

    std::vector<std::size_t> indices(SiteStatus which) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < status.size(); ++i) {
            if (status[i] == which) out.push_back(i);
        }
        return out;
    }
    std::vector<std::size_t> observed_indices() const { return indices(SiteStatus::observed); }
    std::vector<std::size_t> censored_indices() const { return indices(SiteStatus::censored); }

    void validate() const {
        const auto n = static_cast<Eigen::Index>(status.size());
        locations.validate();
        if (static_cast<Eigen::Index>(locations.size()) != n || values.size() != n || lower.size() != n ||
            upper.size() != n) {
            throw ConfigError("CensoredDataset: field lengths disagree");
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            if (status[static_cast<std::size_t>(i)] == SiteStatus::observed) {
                if (!std::isfinite(values(i))) {
                    throw ConfigError("CensoredDataset: observed site " + std::to_string(i) + " has no value");
                }
            } else if (!(lower(i) < upper(i))) {
                throw ConfigError("CensoredDataset: censored site " + std::to_string(i) +
                                  " needs lower < upper");
            }
        }
    }
};

/// Left-censor a fully observed field: values below `threshold` become
/// censored with interval (-inf, threshold). A non-finite threshold means no
/// detection limit: nothing is censored.
inline CensoredDataset censor_below(const LocationSet& locations, const Eigen::VectorXd& field, double threshold) {
    const auto n = field.size();
    CensoredDataset data;
    data.locations = locations;
    data.values = field;
    data.status.resize(static_cast<std::size_t>(n));
    data.lower = Eigen::VectorXd::Constant(n, -kInf);
    data.upper = Eigen::VectorXd::Constant(n, kInf);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::isfinite(threshold) && field(i) < threshold) {
            data.status[static_cast<std::size_t>(i)] = SiteStatus::censored;
            data.values(i) = std::numeric_limits<double>::quiet_NaN();
            data.upper(i) = threshold;
        } else {
            data.status[static_cast<std::size_t>(i)] = SiteStatus::observed;
        }
    }
    return data;
}

namespace detail {

inline Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(idx[k]));
    return out;
}

}  // namespace detail

/// Plan whose ordering puts every observed site first. Observed values are
/// fixed and enter later conditionals only through the regression weights,
/// so equality constraints never reach the low-dimensional sampler. Each
/// group is ordered by `options.ordering` on its own.
inline SnnPlan build_censored_problem(const CensoredDataset& data, const CovarianceModel& model,
                                      const PrecomputeOptions& options = {}) {
    data.validate();
    model.validate();
    if (options.m < 1) throw ConfigError("build_censored_problem: m must be at least 1");
    const auto observed = data.observed_indices();
    const auto censored = data.censored_indices();
    if (censored.empty()) {
        throw ConfigError("build_censored_problem: no censored sites, nothing to sample");
    }
    const Eigen::MatrixXd space = embed(data.locations, model.ranges);

    Ordering ordering{{}, options.ordering};
    ordering.permutation.reserve(data.size());
    for (const auto* group : {&observed, &censored}) {
        if (group->empty()) continue;
        const Ordering within = detail::make_ordering(options.ordering, detail::rows_of(data.locations.points, *group),
                                                      detail::rows_of(space, *group), options.seed, std::nullopt);
        for (std::size_t k : within.permutation) ordering.permutation.push_back((*group)[k]);
    }
    const auto cov = CovarianceSource::kernel(model, data.locations);
    Eigen::VectorXd lower = data.lower;
    Eigen::VectorXd upper = data.upper;
    for (std::size_t i : observed) {
        lower(static_cast<Eigen::Index>(i)) = data.values(static_cast<Eigen::Index>(i));
        upper(static_cast<Eigen::Index>(i)) = data.values(static_cast<Eigen::Index>(i));
    }
    return detail::assemble_plan(cov, std::move(ordering), space, lower, upper, data.values, observed.size(), options);
}

/// Posterior draws of the latent field at the censored sites.
struct CensoredPosterior {
    std::vector<std::size_t> censored_indices;  // column k of `ensemble` is site censored_indices[k]
    SampleEnsemble ensemble;
};

inline CensoredPosterior sample_censored_posterior(const SnnPlan& plan, std::size_t count, std::uint64_t seed,
                                                   const SampleOptions& options = {}) {
    const SampleEnsemble full = sample(plan, count, seed, options);
    CensoredPosterior out;
    for (std::size_t pos = plan.first_sampled(); pos < plan.size(); ++pos) {
        out.censored_indices.push_back(plan.ordering.permutation[pos]);
    }
    std::sort(out.censored_indices.begin(), out.censored_indices.end());
    out.ensemble.seed = full.seed;
    out.ensemble.diagnostics = full.diagnostics;
    out.ensemble.samples.resize(full.samples.rows(), static_cast<Eigen::Index>(out.censored_indices.size()));
    for (std::size_t c = 0; c < out.censored_indices.size(); ++c) {
        out.ensemble.samples.col(static_cast<Eigen::Index>(c)) =
            full.samples.col(static_cast<Eigen::Index>(out.censored_indices[c]));
    }
    return out;
}

/// Posterior samples of the whole field: observed values echoed, censored
/// sites filled from the posterior.
inline SampleEnsemble full_field(const CensoredDataset& data, const CensoredPosterior& posterior) {
    SampleEnsemble out;
    out.seed = posterior.ensemble.seed;
    out.diagnostics = posterior.ensemble.diagnostics;
    const auto count = posterior.ensemble.samples.rows();
    out.samples.resize(count, static_cast<Eigen::Index>(data.size()));
    for (Eigen::Index k = 0; k < count; ++k) out.samples.row(k) = data.values.transpose();
    for (std::size_t c = 0; c < posterior.censored_indices.size(); ++c) {
        out.samples.col(static_cast<Eigen::Index>(posterior.censored_indices[c])) =
            posterior.ensemble.samples.col(static_cast<Eigen::Index>(c));
    }
    return out;
}

struct KrigingResult {
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
};

/// Zero-mean simple kriging of the latent field at `grid`, averaged over
/// posterior samples. Each grid point conditions on its m nearest data sites.
/// `sd` combines the kriging variance with the spread of the per-sample
/// kriging means.
inline KrigingResult krige_predict(const CensoredDataset& data, const CensoredPosterior& posterior,
                                   const CovarianceModel& model, const LocationSet& grid, std::size_t m = 30,
                                   unsigned threads = 1) {
    if (grid.dim() != data.locations.dim() || grid.metric != data.locations.metric) {
        throw ConfigError("krige_predict: grid dimension or metric does not match the data locations");
    }
    const auto count = posterior.ensemble.samples.rows();
    if (count < 1) throw ConfigError("krige_predict: empty posterior ensemble");
    if (m < 1) throw ConfigError("krige_predict: m must be at least 1");
    const SampleEnsemble field = full_field(data, posterior);
    const KdTree tree(embed(data.locations, model.ranges));
    const Eigen::MatrixXd grid_space = embed(grid, model.ranges);

    KrigingResult out;
    out.mean.resize(static_cast<Eigen::Index>(grid.size()));
    out.sd.resize(static_cast<Eigen::Index>(grid.size()));
    parallel_for(grid.size(), threads, [&](std::size_t g) {
        const auto gi = static_cast<Eigen::Index>(g);
        const auto nbrs = tree.knn_indices(grid_space.row(gi), m);
        const Eigen::MatrixXd sigma_nn = covariance_block(model, data.locations, nbrs, nbrs);
        Eigen::VectorXd cross(static_cast<Eigen::Index>(nbrs.size()));
        for (std::size_t j = 0; j < nbrs.size(); ++j) {
            cross(static_cast<Eigen::Index>(j)) = kernel_value(
                model, grid.points.row(gi), data.locations.points.row(static_cast<Eigen::Index>(nbrs[j])), false,
                grid.metric);
        }
        const CholeskyResult chol = cholesky(sigma_nn, g);
        const auto lower = chol.lower.triangularView<Eigen::Lower>();
        const Eigen::VectorXd half = lower.solve(cross);
        const Eigen::VectorXd weights = lower.transpose().solve(half);
        const double kriging_var = std::max(0.0, model.variance - half.squaredNorm());

        Eigen::VectorXd means(count);
        for (Eigen::Index k = 0; k < count; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < nbrs.size(); ++j) {
                acc += weights(static_cast<Eigen::Index>(j)) * field.samples(k, static_cast<Eigen::Index>(nbrs[j]));
            }
            means(k) = acc;
        }
        const double mean = means.mean();
        const double spread = (means.array() - mean).square().mean();
        out.mean(gi) = mean;
        out.sd(gi) = std::sqrt(kriging_var + spread);
    });
    return out;
}

}  // namespace snn
