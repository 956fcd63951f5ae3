#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snn/error.hpp"

namespace snn {

enum class Metric { euclidean, chordal };

inline Metric parse_metric(const std::string& name) {
    if (name == "euclidean") return Metric::euclidean;
    if (name == "chordal") return Metric::chordal;
    throw ConfigError("unknown metric '" + name + "' (expected euclidean or chordal)");
}

inline const char* to_string(Metric metric) noexcept {
    return metric == Metric::euclidean ? "euclidean" : "chordal";
}

/// Points stored one per row. Chordal locations are (longitude, latitude) in
/// degrees and are compared through their embedding on the unit sphere.
struct LocationSet {
    Eigen::MatrixXd points;
    Metric metric = Metric::euclidean;

    LocationSet() = default;
    explicit LocationSet(Eigen::MatrixXd pts, Metric m = Metric::euclidean) : points(std::move(pts)), metric(m) {
        validate();
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(points.rows()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(points.cols()); }

    void validate() const {
        if (points.rows() > 0 && points.cols() < 1) {
            throw ConfigError("LocationSet: points need at least one coordinate");
        }
        if (metric == Metric::chordal && points.cols() != 2) {
            throw ConfigError("LocationSet: chordal metric requires (longitude, latitude) coordinates");
        }
        if (!points.allFinite()) {
            throw ConfigError("LocationSet: coordinates must be finite");
        }
    }
};

namespace detail {

inline Eigen::Vector3d sphere_point(double lon_deg, double lat_deg) noexcept {
    const double lon = lon_deg * std::numbers::pi / 180.0;
    const double lat = lat_deg * std::numbers::pi / 180.0;
    return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

template <typename A, typename B>
void check_same_dim(const A& s, const B& t) {
    if (s.size() != t.size()) {
        throw ConfigError("distance: dimension mismatch (" + std::to_string(s.size()) + " vs " +
                          std::to_string(t.size()) + ")");
    }
}

}  // namespace detail

/// Distance between two coordinate vectors under `metric`. Chordal distance is
/// the straight-line distance between the points mapped onto the unit sphere.
template <typename A, typename B>
double distance(const Eigen::MatrixBase<A>& s, const Eigen::MatrixBase<B>& t, Metric metric) {
    detail::check_same_dim(s, t);
    if (metric == Metric::chordal) {
        if (s.size() != 2) {
            throw ConfigError("distance: chordal metric requires 2 coordinates (longitude, latitude)");
        }
        return (detail::sphere_point(s(0), s(1)) - detail::sphere_point(t(0), t(1))).norm();
    }
    return (s.derived().template cast<double>() - t.derived().template cast<double>()).norm();
}

inline double distance(std::span<const double> s, std::span<const double> t, Metric metric) {
    using Map = Eigen::Map<const Eigen::VectorXd>;
    return distance(Map(s.data(), static_cast<Eigen::Index>(s.size())),
                    Map(t.data(), static_cast<Eigen::Index>(t.size())), metric);
}

enum class Smoothness { half, three_halves, five_halves };

inline Smoothness parse_smoothness(double nu) {
    if (nu == 0.5) return Smoothness::half;
    if (nu == 1.5) return Smoothness::three_halves;
    if (nu == 2.5) return Smoothness::five_halves;
    throw ConfigError("unsupported Matern smoothness " + std::to_string(nu) + " (supported: 0.5, 1.5, 2.5)");
}

inline double to_double(Smoothness nu) noexcept {
    switch (nu) {
        case Smoothness::half: return 0.5;
        case Smoothness::three_halves: return 1.5;
        case Smoothness::five_halves: return 2.5;
    }
    return 0.0;
}

/// Matérn covariance with closed-form half-integer smoothness,
///
///   k(d) = variance * g(d / range),
///   g_{1/2}(u) = e^-u,  g_{3/2}(u) = (1 + u) e^-u,  g_{5/2}(u) = (1 + u + u²/3) e^-u.
///
/// The range enters without a sqrt(2ν) factor. With one range per coordinate
/// the coordinate differences are divided by their ranges before taking the
/// norm (geometric anisotropy). The nugget is added only to matrix entries
/// whose row and column index coincide.
struct CovarianceModel {
    double variance = 1.0;
    std::vector<double> ranges{1.0};
    Smoothness smoothness = Smoothness::three_halves;
    double nugget = 0.0;

    void validate() const {
        if (!(variance > 0.0) || !std::isfinite(variance)) {
            throw ConfigError("CovarianceModel: variance must be positive");
        }
        if (ranges.empty()) {
            throw ConfigError("CovarianceModel: at least one range is required");
        }
        for (double r : ranges) {
            if (!(r > 0.0) || !std::isfinite(r)) {
                throw ConfigError("CovarianceModel: ranges must be positive");
            }
        }
        if (!(nugget >= 0.0) || !std::isfinite(nugget)) {
            throw ConfigError("CovarianceModel: nugget must be nonnegative");
        }
    }

    bool isotropic() const noexcept { return ranges.size() == 1; }

    /// Correlation shape g evaluated at scaled distance u >= 0.
    double shape(double u) const noexcept {
        const double e = std::exp(-u);
        switch (smoothness) {
            case Smoothness::half: return e;
            case Smoothness::three_halves: return (1.0 + u) * e;
            case Smoothness::five_halves: return (1.0 + u + u * u / 3.0) * e;
        }
        return 0.0;
    }

    /// Covariance at an already range-scaled distance.
    double at_scaled_distance(double u) const noexcept { return variance * shape(u); }
};

/// Coordinates mapped into a Euclidean space where plain distance equals the
/// kernel's scaled distance: per-coordinate division by the ranges, or the unit
/// sphere embedding divided by the range for chordal locations. Neighbor
/// searches and maximin orderings run in this space.
inline Eigen::MatrixXd embed(const LocationSet& locations, std::span<const double> ranges = {}) {
    const auto n = static_cast<Eigen::Index>(locations.size());
    if (locations.metric == Metric::chordal) {
        if (ranges.size() > 1) {
            throw ConfigError("chordal metric supports a single isotropic range");
        }
        const double scale = ranges.empty() ? 1.0 : 1.0 / ranges[0];
        Eigen::MatrixXd out(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) {
            out.row(i) = scale * detail::sphere_point(locations.points(i, 0), locations.points(i, 1)).transpose();
        }
        return out;
    }
    Eigen::MatrixXd out = locations.points;
    if (ranges.size() == 1) {
        out /= ranges[0];
    } else if (!ranges.empty()) {
        if (ranges.size() != locations.dim()) {
            throw ConfigError("CovarianceModel: " + std::to_string(ranges.size()) + " ranges given for " +
                              std::to_string(locations.dim()) + "-dimensional locations");
        }
        for (Eigen::Index k = 0; k < out.cols(); ++k) {
            out.col(k) /= ranges[static_cast<std::size_t>(k)];
        }
    }
    return out;
}

/// Scaled distance between two locations under the model's ranges.
template <typename A, typename B>
double scaled_distance(const CovarianceModel& model, const Eigen::MatrixBase<A>& s, const Eigen::MatrixBase<B>& t,
                       Metric metric) {
    detail::check_same_dim(s, t);
    if (metric == Metric::chordal) {
        if (!model.isotropic()) {
            throw ConfigError("chordal metric supports a single isotropic range");
        }
        return distance(s, t, metric) / model.ranges[0];
    }
    if (model.isotropic()) {
        return distance(s, t, metric) / model.ranges[0];
    }
    if (model.ranges.size() != static_cast<std::size_t>(s.size())) {
        throw ConfigError("CovarianceModel: range count does not match location dimension");
    }
    double sum = 0.0;
    for (Eigen::Index k = 0; k < s.size(); ++k) {
        const double d = (s(k) - t(k)) / model.ranges[static_cast<std::size_t>(k)];
        sum += d * d;
    }
    return std::sqrt(sum);
}

/// K(s, t), plus the nugget when `same_index` is set.
template <typename A, typename B>
double kernel_value(const CovarianceModel& model, const Eigen::MatrixBase<A>& s, const Eigen::MatrixBase<B>& t,
                    bool same_index, Metric metric = Metric::euclidean) {
    const double k = model.at_scaled_distance(scaled_distance(model, s, t, metric));
    return same_index ? k + model.nugget : k;
}

/// Σ restricted to rows × cols, indices into `locations`.
inline Eigen::MatrixXd covariance_block(const CovarianceModel& model, const LocationSet& locations,
                                        std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
    const std::size_t n = locations.size();
    for (std::size_t r : rows) {
        if (r >= n) throw ConfigError("covariance_block: row index " + std::to_string(r) + " out of range");
    }
    for (std::size_t c : cols) {
        if (c >= n) throw ConfigError("covariance_block: column index " + std::to_string(c) + " out of range");
    }
    Eigen::MatrixXd block(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto s = locations.points.row(static_cast<Eigen::Index>(rows[r]));
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const auto t = locations.points.row(static_cast<Eigen::Index>(cols[c]));
            block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                kernel_value(model, s, t, rows[r] == cols[c], locations.metric);
        }
    }
    return block;
}

/// Dense covariance over every location.
inline Eigen::MatrixXd covariance_matrix(const CovarianceModel& model, const LocationSet& locations) {
    std::vector<std::size_t> all(locations.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return covariance_block(model, locations, all, all);
}

}  // namespace snn
