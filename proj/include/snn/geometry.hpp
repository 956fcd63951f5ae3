#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snn/error.hpp"
#include "snn/kdtree.hpp"
#include "snn/kernel.hpp"
#include "snn/rng.hpp"

namespace snn {

enum class OrderingKind { coordinate, random, maximin, given };

inline OrderingKind parse_ordering(const std::string& name) {
    if (name == "coordinate") return OrderingKind::coordinate;
    if (name == "random") return OrderingKind::random;
    if (name == "maximin") return OrderingKind::maximin;
    if (name == "given") return OrderingKind::given;
    throw ConfigError("unknown ordering '" + name + "' (expected coordinate, random, maximin or given)");
}

inline const char* to_string(OrderingKind kind) noexcept {
    switch (kind) {
        case OrderingKind::coordinate: return "coordinate";
        case OrderingKind::random: return "random";
        case OrderingKind::maximin: return "maximin";
        case OrderingKind::given: return "given";
    }
    return "?";
}

/// permutation[position] = original index.
struct Ordering {
    std::vector<std::size_t> permutation;
    OrderingKind kind = OrderingKind::given;

    std::size_t size() const noexcept { return permutation.size(); }

    /// inverse()[original index] = position.
    std::vector<std::size_t> inverse() const {
        std::vector<std::size_t> inv(permutation.size());
        for (std::size_t pos = 0; pos < permutation.size(); ++pos) inv[permutation[pos]] = pos;
        return inv;
    }

    bool is_permutation() const {
        std::vector<char> seen(permutation.size(), 0);
        for (std::size_t v : permutation) {
            if (v >= seen.size() || seen[v]) return false;
            seen[v] = 1;
        }
        return true;
    }
};

inline Ordering identity_ordering(std::size_t n) {
    Ordering out{std::vector<std::size_t>(n), OrderingKind::given};
    std::iota(out.permutation.begin(), out.permutation.end(), std::size_t{0});
    return out;
}

/// Lexicographic by coordinate 1, then 2, ...; original index breaks ties.
inline Ordering order_coordinate(const Eigen::MatrixXd& points) {
    Ordering out = identity_ordering(static_cast<std::size_t>(points.rows()));
    out.kind = OrderingKind::coordinate;
    std::stable_sort(out.permutation.begin(), out.permutation.end(), [&](std::size_t a, std::size_t b) {
        for (Eigen::Index k = 0; k < points.cols(); ++k) {
            const double pa = points(static_cast<Eigen::Index>(a), k);
            const double pb = points(static_cast<Eigen::Index>(b), k);
            if (pa != pb) return pa < pb;
        }
        return false;
    });
    return out;
}

inline Ordering order_coordinate(const LocationSet& locations) { return order_coordinate(locations.points); }

/// Uniformly random permutation (Fisher–Yates on a dedicated stream).
inline Ordering order_random(std::size_t n, std::uint64_t seed) {
    Ordering out = identity_ordering(n);
    out.kind = OrderingKind::random;
    Rng rng(seed, streams::kOrdering);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(out.permutation[i - 1], out.permutation[j]);
    }
    return out;
}

/// Greedy maximin ordering in Euclidean space: the first point is the one
/// nearest the centroid, each following point maximizes its minimum distance
/// to the points already ordered. Ties go to the smallest original index.
/// O(n²) with an incremental min-distance array.
inline Ordering order_maximin(const Eigen::MatrixXd& points) {
    const auto n = static_cast<std::size_t>(points.rows());
    Ordering out{{}, OrderingKind::maximin};
    if (n == 0) return out;
    out.permutation.reserve(n);

    const Eigen::RowVectorXd centroid = points.colwise().mean();
    std::size_t first = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (points.row(static_cast<Eigen::Index>(i)) - centroid).squaredNorm();
        if (d < best) {
            best = d;
            first = i;
        }
    }

    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
    std::vector<char> taken(n, 0);
    std::size_t current = first;
    for (std::size_t step = 0; step < n; ++step) {
        out.permutation.push_back(current);
        taken[current] = 1;
        if (step + 1 == n) break;
        const auto s = points.row(static_cast<Eigen::Index>(current));
        std::size_t next = n;
        double next_dist = -1.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (taken[j]) continue;
            const double d = (points.row(static_cast<Eigen::Index>(j)) - s).squaredNorm();
            if (d < min_dist[j]) min_dist[j] = d;
            if (min_dist[j] > next_dist) {
                next_dist = min_dist[j];
                next = j;
            }
        }
        current = next;
    }
    return out;
}

inline Ordering order_maximin(const LocationSet& locations) { return order_maximin(embed(locations)); }

/// Neighbor policy for conditioning sets.
///  all             m nearest among every location
///  split_obs_cens  ceil(m/2) nearest among the sampled (censored) pool plus
///                  floor(m/2) nearest among the fixed (observed) pool
enum class NeighborPolicy { all, split_obs_cens };

inline NeighborPolicy parse_neighbor_policy(const std::string& name) {
    if (name == "all") return NeighborPolicy::all;
    if (name == "split-obs-cens" || name == "split_obs_cens") return NeighborPolicy::split_obs_cens;
    throw ConfigError("unknown neighbor policy '" + name + "' (expected all or split-obs-cens)");
}

inline const char* to_string(NeighborPolicy policy) noexcept {
    return policy == NeighborPolicy::all ? "all" : "split-obs-cens";
}

/// Conditioning sets in ordered-position indexing. For position i,
/// c(i) = later(i) ∪ previous(i) with previous(i) = c(i) ∩ {0..i-1} and
/// later(i) = c(i) \ previous(i), whose first entry is i itself. Positions
/// below `first_sampled` hold fixed values and carry empty sets.
struct NeighborPlan {
    std::vector<std::vector<std::size_t>> previous;
    std::vector<std::vector<std::size_t>> later;
    std::size_t m = 0;
    std::size_t first_sampled = 0;

    std::size_t size() const noexcept { return later.size(); }

    /// c(i): i first, then the remaining neighbors in distance order.
    std::vector<std::size_t> neighbors(std::size_t i) const {
        std::vector<std::size_t> out = later[i];
        out.insert(out.end(), previous[i].begin(), previous[i].end());
        return out;
    }
};

namespace detail {

inline void append_split(std::size_t i, const std::vector<std::size_t>& found, std::size_t keep,
                         std::vector<std::size_t>& previous, std::vector<std::size_t>& later) {
    std::size_t taken = 0;
    for (std::size_t j : found) {
        if (taken == keep) break;
        if (j == i) continue;
        (j < i ? previous : later).push_back(j);
        ++taken;
    }
}

}  // namespace detail

/// Nearest-neighbor conditioning sets for points already permuted into their
/// sampling order. The search covers all locations, earlier and later.
inline NeighborPlan build_neighbor_plan(const Eigen::MatrixXd& points_in_order, std::size_t m,
                                        NeighborPolicy policy = NeighborPolicy::all, std::size_t first_sampled = 0) {
    if (m < 1) {
        throw ConfigError("build_neighbor_plan: m must be at least 1");
    }
    const auto n = static_cast<std::size_t>(points_in_order.rows());
    if (first_sampled > n) {
        throw ConfigError("build_neighbor_plan: first_sampled exceeds the number of locations");
    }
    NeighborPlan plan;
    plan.m = m;
    plan.first_sampled = first_sampled;
    plan.previous.resize(n);
    plan.later.resize(n);
    if (n == first_sampled) return plan;

    const bool split = policy == NeighborPolicy::split_obs_cens && first_sampled > 0;
    if (!split) {
        const KdTree tree(points_in_order);
        const std::size_t k = std::min(m, n);
        for (std::size_t i = first_sampled; i < n; ++i) {
            const auto found = tree.knn_indices(points_in_order.row(static_cast<Eigen::Index>(i)), k);
            plan.later[i].push_back(i);
            detail::append_split(i, found, k - 1, plan.previous[i], plan.later[i]);
        }
        return plan;
    }

    // Split pools: positions [0, first_sampled) are fixed, the rest sampled.
    const KdTree fixed_tree(points_in_order.topRows(static_cast<Eigen::Index>(first_sampled)));
    const KdTree sampled_tree(points_in_order.bottomRows(static_cast<Eigen::Index>(n - first_sampled)));
    const std::size_t m_fixed = std::min(m / 2, first_sampled);
    const std::size_t m_sampled = std::min(m - m / 2, n - first_sampled);
    for (std::size_t i = first_sampled; i < n; ++i) {
        const auto query = points_in_order.row(static_cast<Eigen::Index>(i));
        plan.later[i].push_back(i);
        auto own = sampled_tree.knn_indices(query, m_sampled);
        for (auto& j : own) j += first_sampled;
        detail::append_split(i, own, m_sampled - 1, plan.previous[i], plan.later[i]);
        if (m_fixed > 0) {
            const auto fixed = fixed_tree.knn_indices(query, m_fixed);
            plan.previous[i].insert(plan.previous[i].end(), fixed.begin(), fixed.end());
        }
    }
    return plan;
}

}  // namespace snn
