#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "snn/censored.hpp"
#include "snn/error.hpp"
#include "snn/eval.hpp"
#include "snn/kernel.hpp"

namespace snn {

/// 17 significant digits, enough to round-trip any double.
inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Infinite and NaN values become an empty field.
inline std::string format_field(double x) { return std::isfinite(x) ? format_double(x) : std::string(); }

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    for (auto& field : out) {
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
    }
    return out;
}

inline std::string where(std::size_t line) { return "line " + std::to_string(line) + ": "; }

inline double parse_number(std::string_view field, std::size_t line, std::string_view column) {
    double value = 0.0;
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        throw ConfigError(where(line) + "column '" + std::string(column) + "' is not a number: '" +
                          std::string(field) + "'");
    }
    return value;
}

/// Empty field means `missing` (used for infinite bounds).
inline double parse_optional(std::string_view field, double missing, std::size_t line, std::string_view column) {
    return field.empty() ? missing : parse_number(field, line, column);
}

inline bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace detail

/// CSV schema: coord_1..coord_d,value,status,lower,upper with status obs or
/// cens. Empty bound fields mean -inf / +inf. Errors name the file line.
inline CensoredDataset read_dataset_csv(std::istream& in, Metric metric = Metric::euclidean) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("line 1: missing header");
    const auto header = detail::split_csv_line(line);
    if (header.size() < 5) throw ConfigError("line 1: expected coord_1..coord_d,value,status,lower,upper");
    const std::size_t d = header.size() - 4;
    for (std::size_t k = 0; k < d; ++k) {
        if (header[k] != "coord_" + std::to_string(k + 1)) {
            throw ConfigError("line 1: column " + std::to_string(k + 1) + " should be 'coord_" + std::to_string(k + 1) +
                              "', found '" + std::string(header[k]) + "'");
        }
    }
    if (header[d] != "value" || header[d + 1] != "status" || header[d + 2] != "lower" || header[d + 3] != "upper") {
        throw ConfigError("line 1: trailing columns must be value,status,lower,upper");
    }

    std::vector<double> coords, values, lower, upper;
    std::vector<SiteStatus> status;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_blank(line)) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != header.size()) {
            throw ConfigError(detail::where(line_no) + "expected " + std::to_string(header.size()) + " fields, found " +
                              std::to_string(f.size()));
        }
        for (std::size_t k = 0; k < d; ++k) {
            const double c = detail::parse_number(f[k], line_no, header[k]);
            if (!std::isfinite(c)) throw ConfigError(detail::where(line_no) + "coordinates must be finite");
            coords.push_back(c);
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const double value = detail::parse_optional(f[d], nan, line_no, "value");
        const double lo = detail::parse_optional(f[d + 2], -kInf, line_no, "lower");
        const double hi = detail::parse_optional(f[d + 3], kInf, line_no, "upper");
        if (f[d + 1] == "obs") {
            if (!std::isfinite(value)) {
                throw ConfigError(detail::where(line_no) + "observed site needs a finite value");
            }
            if (!f[d + 2].empty() || !f[d + 3].empty()) {
                throw ConfigError(detail::where(line_no) + "observed site must leave lower and upper empty");
            }
            status.push_back(SiteStatus::observed);
        } else if (f[d + 1] == "cens") {
            if (!(lo < hi)) throw ConfigError(detail::where(line_no) + "censored site needs lower < upper");
            status.push_back(SiteStatus::censored);
        } else {
            throw ConfigError(detail::where(line_no) + "status must be 'obs' or 'cens', found '" +
                              std::string(f[d + 1]) + "'");
        }
        values.push_back(value);
        lower.push_back(lo);
        upper.push_back(hi);
    }
    if (status.empty()) throw ConfigError("dataset has no rows");

    const auto n = static_cast<Eigen::Index>(status.size());
    CensoredDataset data;
    data.locations = LocationSet(
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            coords.data(), n, static_cast<Eigen::Index>(d)),
        metric);
    data.values = Eigen::Map<const Eigen::VectorXd>(values.data(), n);
    data.lower = Eigen::Map<const Eigen::VectorXd>(lower.data(), n);
    data.upper = Eigen::Map<const Eigen::VectorXd>(upper.data(), n);
    data.status = std::move(status);
    data.validate();
    return data;
}

inline CensoredDataset read_dataset_csv(const std::string& path, Metric metric = Metric::euclidean) {
    auto in = detail::open_input(path);
    return read_dataset_csv(in, metric);
}

inline void write_dataset_csv(std::ostream& out, const CensoredDataset& data) {
    data.validate();
    const std::size_t d = data.locations.dim();
    for (std::size_t k = 0; k < d; ++k) out << "coord_" << k + 1 << ',';
    out << "value,status,lower,upper\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(d); ++k) out << format_double(data.locations.points(r, k)) << ',';
        out << format_field(data.values(r)) << ',';
        if (data.status[i] == SiteStatus::observed) {
            out << "obs,,\n";
        } else {
            out << "cens," << format_field(data.lower(r)) << ',' << format_field(data.upper(r)) << '\n';
        }
    }
}

inline void write_dataset_csv(const std::string& path, const CensoredDataset& data) {
    auto out = detail::open_output(path);
    write_dataset_csv(out, data);
}

/// Numeric CSV with an optional header row (detected by a non-numeric first
/// field). Every row must have the same number of fields.
inline Eigen::MatrixXd read_matrix_csv(std::istream& in, std::vector<std::string>* header = nullptr) {
    std::string line;
    std::vector<double> cells;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_blank(line)) continue;
        const auto f = detail::split_csv_line(line);
        if (rows == 0 && cols == 0) {
            double probe = 0.0;
            const auto first = f.front();
            const auto [ptr, ec] = std::from_chars(first.data(), first.data() + first.size(), probe);
            if (first.empty() || ec != std::errc() || ptr != first.data() + first.size()) {
                if (header != nullptr) header->assign(f.begin(), f.end());
                cols = f.size();
                continue;
            }
        }
        if (cols == 0) cols = f.size();
        if (f.size() != cols) {
            throw ConfigError(detail::where(line_no) + "expected " + std::to_string(cols) + " fields, found " +
                              std::to_string(f.size()));
        }
        for (std::size_t k = 0; k < f.size(); ++k) cells.push_back(detail::parse_number(f[k], line_no, std::to_string(k + 1)));
        ++rows;
    }
    if (rows == 0) throw ConfigError("matrix file has no numeric rows");
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        cells.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline Eigen::MatrixXd read_matrix_csv(const std::string& path, std::vector<std::string>* header = nullptr) {
    auto in = detail::open_input(path);
    return read_matrix_csv(in, header);
}

/// Two columns lower,upper (header required); empty fields are infinite.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> read_bounds_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("line 1: missing header");
    const auto header = detail::split_csv_line(line);
    if (header.size() != 2 || header[0] != "lower" || header[1] != "upper") {
        throw ConfigError("line 1: bounds header must be 'lower,upper'");
    }
    std::vector<double> lo, hi;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_blank(line)) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 2) throw ConfigError(detail::where(line_no) + "expected 2 fields");
        lo.push_back(detail::parse_optional(f[0], -kInf, line_no, "lower"));
        hi.push_back(detail::parse_optional(f[1], kInf, line_no, "upper"));
        if (!(lo.back() < hi.back())) throw ConfigError(detail::where(line_no) + "lower must be below upper");
    }
    return {Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size())),
            Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()))};
}

inline std::pair<Eigen::VectorXd, Eigen::VectorXd> read_bounds_csv(const std::string& path) {
    auto in = detail::open_input(path);
    return read_bounds_csv(in);
}

/// Rows of `m` under `header`; non-finite entries are written as empty fields.
template <typename Derived>
void write_matrix_csv(std::ostream& out, const Eigen::DenseBase<Derived>& m, std::span<const std::string> header) {
    for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
    if (!header.empty()) out << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_field(m(r, c));
        out << '\n';
    }
}

inline std::vector<std::string> numbered_header(std::string_view prefix, std::size_t count) {
    std::vector<std::string> out;
    out.reserve(count);
    for (std::size_t k = 1; k <= count; ++k) out.push_back(std::string(prefix) + std::to_string(k));
    return out;
}

/// One row per sample, one column per coordinate (site_1..site_n or the
/// given original indices, 1-based).
inline void write_samples_csv(std::ostream& out, const SampleMatrix& samples,
                              std::span<const std::size_t> columns = {}) {
    std::vector<std::string> header;
    if (columns.empty()) {
        header = numbered_header("site_", static_cast<std::size_t>(samples.cols()));
    } else {
        for (std::size_t c : columns) header.push_back("site_" + std::to_string(c + 1));
    }
    write_matrix_csv(out, samples, header);
}

}  // namespace snn
