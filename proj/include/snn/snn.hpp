#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "snn/error.hpp"
#include "snn/geometry.hpp"
#include "snn/kernel.hpp"
#include "snn/linalg.hpp"
#include "snn/parallel.hpp"
#include "snn/rng.hpp"
#include "snn/tmvn.hpp"

namespace snn {

/// Σ either from a kernel over locations or as an explicit dense matrix.
class CovarianceSource {
public:
    static CovarianceSource kernel(CovarianceModel model, LocationSet locations) {
        model.validate();
        locations.validate();
        if (locations.metric == Metric::euclidean && !model.isotropic() && model.ranges.size() != locations.dim()) {
            throw ConfigError("CovarianceSource: range count does not match location dimension");
        }
        CovarianceSource out;
        out.source_ = KernelSource{std::move(model), std::move(locations)};
        return out;
    }

    static CovarianceSource matrix(Eigen::MatrixXd sigma) {
        if (sigma.rows() != sigma.cols()) throw ConfigError("CovarianceSource: covariance matrix must be square");
        if (!sigma.allFinite()) throw ConfigError("CovarianceSource: covariance matrix has non-finite entries");
        if (!sigma.isApprox(sigma.transpose(), 1e-12)) {
            throw ConfigError("CovarianceSource: covariance matrix must be symmetric");
        }
        CovarianceSource out;
        out.source_ = std::move(sigma);
        return out;
    }

    std::size_t size() const noexcept {
        if (const auto* k = std::get_if<KernelSource>(&source_)) return k->locations.size();
        return static_cast<std::size_t>(std::get<Eigen::MatrixXd>(source_).rows());
    }

    Eigen::MatrixXd block(std::span<const std::size_t> rows, std::span<const std::size_t> cols) const {
        if (const auto* k = std::get_if<KernelSource>(&source_)) {
            return covariance_block(k->model, k->locations, rows, cols);
        }
        const auto& sigma = std::get<Eigen::MatrixXd>(source_);
        Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < cols.size(); ++c) {
                if (rows[r] >= size() || cols[c] >= size()) throw ConfigError("CovarianceSource: index out of range");
                out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    sigma(static_cast<Eigen::Index>(rows[r]), static_cast<Eigen::Index>(cols[c]));
            }
        }
        return out;
    }

    /// Kernel model when Σ is kernel based.
    const CovarianceModel* model() const noexcept {
        const auto* k = std::get_if<KernelSource>(&source_);
        return k != nullptr ? &k->model : nullptr;
    }
    const LocationSet* locations() const noexcept {
        const auto* k = std::get_if<KernelSource>(&source_);
        return k != nullptr ? &k->locations : nullptr;
    }

private:
    struct KernelSource {
        CovarianceModel model;
        LocationSet locations;
    };
    std::variant<Eigen::MatrixXd, KernelSource> source_;
};

/// Locations 0, 1, ..., n-1 on a line; the neighbor geometry used for an
/// explicit covariance matrix when no locations are supplied.
inline LocationSet index_locations(std::size_t n) {
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) pts(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
    return LocationSet(std::move(pts));
}

/// The target TN(lower, upper; Σ). `locations` define nearest neighbors; for a
/// kernel source they default to the kernel's locations.
struct TruncationProblem {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    CovarianceSource covariance;
    std::optional<LocationSet> locations;

    std::size_t size() const noexcept { return covariance.size(); }

    void validate() const {
        const auto n = static_cast<Eigen::Index>(size());
        if (n < 1) throw ConfigError("TruncationProblem: empty problem");
        if (lower.size() != n || upper.size() != n) {
            throw ConfigError("TruncationProblem: bounds must have one entry per coordinate");
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(lower(i) < upper(i))) {
                throw ConfigError("TruncationProblem: lower bound not below upper bound at index " + std::to_string(i));
            }
        }
        if (locations && locations->size() != size()) {
            throw ConfigError("TruncationProblem: location count does not match covariance size");
        }
    }

    /// Euclidean coordinates for neighbor search and maximin ordering.
    Eigen::MatrixXd neighbor_space() const {
        if (const auto* model = covariance.model()) {
            const LocationSet& locs = locations ? *locations : *covariance.locations();
            return embed(locs, model->ranges);
        }
        return locations ? embed(*locations) : index_locations(size()).points;
    }

    /// Coordinates for the coordinate-oriented ordering.
    Eigen::MatrixXd raw_coordinates() const {
        if (locations) return locations->points;
        if (const auto* locs = covariance.locations()) return locs->points;
        return index_locations(size()).points;
    }
};

struct PrecomputeOptions {
    std::size_t m = 30;
    OrderingKind ordering = OrderingKind::coordinate;
    std::optional<Ordering> given_ordering{};  // used when ordering == given
    NeighborPolicy neighbor_policy = NeighborPolicy::all;
    std::uint64_t seed = 0;  // random ordering only
    unsigned threads = 1;
    JitterPolicy jitter{};
};

/// Everything the sampling sweep needs, in ordered-position indexing.
/// Positions [0, first_sampled) hold fixed values (observed data).
struct SnnPlan {
    Ordering ordering;
    NeighborPlan neighbors;
    std::vector<ConditionalFactors> factors;  // empty entries for fixed positions
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    Eigen::VectorXd fixed_values;             // first_sampled entries
    std::size_t m = 0;
    std::vector<std::size_t> jittered;        // positions whose factors needed jitter

    std::size_t size() const noexcept { return ordering.size(); }
    std::size_t first_sampled() const noexcept { return neighbors.first_sampled; }
};

/// Per-sample telemetry of an ensemble.
struct SampleDiagnostics {
    SamplerTelemetry sampler;
    std::uint64_t univariate_draws = 0;  // coordinates drawn without the joint sampler
};

/// N samples, row k is sample k in original index order.
struct SampleEnsemble {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> samples;
    std::uint64_t seed = 0;
    std::vector<SampleDiagnostics> diagnostics;

    std::size_t count() const noexcept { return static_cast<std::size_t>(samples.rows()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(samples.cols()); }

    SamplerTelemetry total_telemetry() const {
        SamplerTelemetry total;
        for (const auto& d : diagnostics) total += d.sampler;
        return total;
    }
};

struct SampleOptions {
    unsigned threads = 1;
    SamplerPolicy sampler{};
};

/// First entry of a joint draw: the marginal of coordinate i is obtained by
/// sampling the joint over c_l(i) and discarding the rest.
inline double marginal_keep_first(std::span<const double> joint) {
    if (joint.empty()) throw ConfigError("marginal_keep_first: empty joint sample");
    return joint.front();
}

inline double marginal_keep_first(const Eigen::VectorXd& joint) {
    return marginal_keep_first(std::span<const double>(joint.data(), static_cast<std::size_t>(joint.size())));
}

namespace detail {

inline std::vector<std::size_t> to_original(const Ordering& ordering, const std::vector<std::size_t>& positions) {
    std::vector<std::size_t> out(positions.size());
    for (std::size_t k = 0; k < positions.size(); ++k) out[k] = ordering.permutation[positions[k]];
    return out;
}

/// Factors for one ordered position; Σ blocks are read in original indexing
/// so that the nugget still lands on the diagonal.
inline ConditionalFactors factors_at(const CovarianceSource& cov, const Ordering& ordering, const NeighborPlan& plan,
                                     std::size_t i, const JitterPolicy& jitter) {
    const auto later = to_original(ordering, plan.later[i]);
    const auto previous = to_original(ordering, plan.previous[i]);
    return conditional_factors(cov.block(later, later), cov.block(later, previous), cov.block(previous, previous), i,
                               jitter);
}

inline SnnPlan assemble_plan(const CovarianceSource& cov, Ordering ordering, const Eigen::MatrixXd& neighbor_space,
                             const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const Eigen::VectorXd& fixed_by_original, std::size_t first_sampled,
                             const PrecomputeOptions& options) {
    const std::size_t n = ordering.size();
    SnnPlan plan;
    plan.m = options.m;
    Eigen::MatrixXd ordered_points(static_cast<Eigen::Index>(n), neighbor_space.cols());
    plan.lower.resize(static_cast<Eigen::Index>(n));
    plan.upper.resize(static_cast<Eigen::Index>(n));
    plan.fixed_values.resize(static_cast<Eigen::Index>(first_sampled));
    for (std::size_t pos = 0; pos < n; ++pos) {
        const auto orig = static_cast<Eigen::Index>(ordering.permutation[pos]);
        const auto p = static_cast<Eigen::Index>(pos);
        ordered_points.row(p) = neighbor_space.row(orig);
        plan.lower(p) = lower(orig);
        plan.upper(p) = upper(orig);
        if (pos < first_sampled) plan.fixed_values(p) = fixed_by_original(orig);
    }
    plan.neighbors = build_neighbor_plan(ordered_points, options.m, options.neighbor_policy, first_sampled);
    plan.factors.resize(n);
    parallel_for(n - first_sampled, options.threads, [&](std::size_t k) {
        const std::size_t i = first_sampled + k;
        plan.factors[i] = factors_at(cov, ordering, plan.neighbors, i, options.jitter);
    });
    for (std::size_t i = first_sampled; i < n; ++i) {
        if (plan.factors[i].jitter > 0.0) plan.jittered.push_back(i);
    }
    plan.ordering = std::move(ordering);
    return plan;
}

inline Ordering make_ordering(OrderingKind kind, const Eigen::MatrixXd& raw, const Eigen::MatrixXd& space,
                              std::uint64_t seed, const std::optional<Ordering>& given) {
    const auto n = static_cast<std::size_t>(raw.rows());
    switch (kind) {
        case OrderingKind::coordinate: return order_coordinate(raw);
        case OrderingKind::random: return order_random(n, seed);
        case OrderingKind::maximin: return order_maximin(space);
        case OrderingKind::given:
            if (!given) return identity_ordering(n);
            if (given->size() != n || !given->is_permutation()) {
                throw ConfigError("given ordering is not a permutation of the locations");
            }
            return *given;
    }
    return identity_ordering(n);
}

}  // namespace detail

/// Ordering, neighbor sets and conditional factors for every coordinate.
inline SnnPlan precompute(const TruncationProblem& problem, const PrecomputeOptions& options = {}) {
    problem.validate();
    if (options.m < 1) throw ConfigError("precompute: m must be at least 1");
    const Eigen::MatrixXd space = problem.neighbor_space();
    Ordering ordering =
        detail::make_ordering(options.ordering, problem.raw_coordinates(), space, options.seed, options.given_ordering);
    return detail::assemble_plan(problem.covariance, std::move(ordering), space, problem.lower, problem.upper,
                                 Eigen::VectorXd(), 0, options);
}

namespace detail {

// One sweep over the ordered positions for sample k; returns values by position.
inline Eigen::VectorXd sweep(const SnnPlan& plan, Rng& rng, const SamplerPolicy& policy, SampleDiagnostics& diag,
                             std::size_t k) {
    const std::size_t n = plan.size();
    const std::size_t first = plan.first_sampled();
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    y.head(static_cast<Eigen::Index>(first)) = plan.fixed_values;
    Eigen::VectorXd previous_values;
    for (std::size_t i = first; i < n; ++i) {
        const ConditionalFactors& f = plan.factors[i];
        const auto& prev = plan.neighbors.previous[i];
        const auto& later = plan.neighbors.later[i];
        previous_values.resize(static_cast<Eigen::Index>(prev.size()));
        for (std::size_t j = 0; j < prev.size(); ++j) {
            previous_values(static_cast<Eigen::Index>(j)) = y(static_cast<Eigen::Index>(prev[j]));
        }
        const Eigen::VectorXd mean = f.weights * previous_values;
        const auto pos = static_cast<Eigen::Index>(i);
        bool joint = false;
        for (std::size_t j = 1; j < later.size() && !joint; ++j) {
            const auto p = static_cast<Eigen::Index>(later[j]);
            joint = std::isfinite(plan.lower(p)) || std::isfinite(plan.upper(p));
        }
        double value = 0.0;
        try {
            if (!joint) {
                // Later neighbors are unconstrained: their marginalization is exact.
                value = mean(0) + sample_truncated_univariate(0.0, f.chol(0, 0), plan.lower(pos) - mean(0),
                                                              plan.upper(pos) - mean(0), rng);
                ++diag.univariate_draws;
            } else {
                LowDimTarget target;
                target.lower.resize(static_cast<Eigen::Index>(later.size()));
                target.upper.resize(static_cast<Eigen::Index>(later.size()));
                for (std::size_t j = 0; j < later.size(); ++j) {
                    const auto p = static_cast<Eigen::Index>(later[j]);
                    const auto jj = static_cast<Eigen::Index>(j);
                    target.lower(jj) = plan.lower(p) - mean(jj);
                    target.upper(jj) = plan.upper(p) - mean(jj);
                }
                target.chol = f.chol;
                const Eigen::VectorXd z = sample_lowdim_tmvn(target, rng, policy, &diag.sampler);
                value = marginal_keep_first(z) + mean(0);
            }
        } catch (const std::exception& e) {
            throw NumericalError("sampling failed at sample " + std::to_string(k) + ", position " + std::to_string(i) +
                                 ": " + e.what());
        }
        y(pos) = std::clamp(value, plan.lower(pos), plan.upper(pos));
    }
    return y;
}

}  // namespace detail

/// N samples from the sequential nearest-neighbor approximation. Sample k
/// draws from stream k of `seed`, so output does not depend on threads.
inline SampleEnsemble sample(const SnnPlan& plan, std::size_t count, std::uint64_t seed,
                             const SampleOptions& options = {}) {
    const std::size_t n = plan.size();
    SampleEnsemble out;
    out.seed = seed;
    out.samples.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(n));
    out.diagnostics.resize(count);
    parallel_for(count, options.threads, [&](std::size_t k) {
        Rng rng(seed, k);
        const Eigen::VectorXd y = detail::sweep(plan, rng, options.sampler, out.diagnostics[k], k);
        for (std::size_t pos = 0; pos < n; ++pos) {
            out.samples(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(plan.ordering.permutation[pos])) =
                y(static_cast<Eigen::Index>(pos));
        }
    });
    return out;
}

/// Σ implied by the plan when no coordinate is truncated: the Vecchia-type
/// joint Gaussian y = B y + e, e ~ N(0, D) with B, D read from the first row
/// of each conditional. Returned in original index order.
inline Eigen::MatrixXd implied_covariance(const SnnPlan& plan) {
    if (plan.first_sampled() != 0) throw ConfigError("implied_covariance: plan has fixed coordinates");
    const auto n = static_cast<Eigen::Index>(plan.size());
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& f = plan.factors[static_cast<std::size_t>(i)];
        const auto& prev = plan.neighbors.previous[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < prev.size(); ++j) {
            b(i, static_cast<Eigen::Index>(prev[j])) = f.weights(0, static_cast<Eigen::Index>(j));
        }
        d(i) = f.covariance(0, 0);
    }
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - b;
    const Eigen::MatrixXd a_inv = a.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd ordered = a_inv * d.asDiagonal() * a_inv.transpose();
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) {
            out(static_cast<Eigen::Index>(plan.ordering.permutation[static_cast<std::size_t>(r)]),
                static_cast<Eigen::Index>(plan.ordering.permutation[static_cast<std::size_t>(c)])) = ordered(r, c);
        }
    }
    return out;
}

}  // namespace snn
