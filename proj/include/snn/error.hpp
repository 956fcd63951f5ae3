#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace snn {

/// Invalid input or configuration (bad bounds, dimension mismatch, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical breakdown: factorization failure, sampler exhaustion.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Cholesky factorization failed even after jitter escalation.
class FactorizationError : public NumericalError {
public:
    FactorizationError(const std::string& what, std::size_t index)
        : NumericalError(what), index_(index) {}

    /// Ordered position being processed when the failure happened.
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

}  // namespace snn
