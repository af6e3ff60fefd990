#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ivcea {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A required column is absent or a schema mapping is malformed.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Input data violates a domain constraint (e.g. non-binary assignment).
class ValidationError : public Error {
public:
    ValidationError(const std::string& what, std::ptrdiff_t row = -1)
        : Error(what), row_(row) {}
    /// Zero-based data row, or -1 when the error is not row specific.
    std::ptrdiff_t row() const noexcept { return row_; }

private:
    std::ptrdiff_t row_;
};

/// Invalid configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Rank-deficient design or singular covariance.
class SingularError : public Error {
public:
    SingularError(const std::string& what, std::vector<std::string> columns = {})
        : Error(what), columns_(std::move(columns)) {}
    const std::vector<std::string>& columns() const noexcept { return columns_; }

private:
    std::vector<std::string> columns_;
};

/// Logistic MLE does not exist: complete or quasi-complete separation.
class SeparationError : public Error {
public:
    using Error::Error;
};

/// Iterative solver did not reach its tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Assignment does not shift treatment receipt (instrument irrelevance).
class IdentificationError : public Error {
public:
    using Error::Error;
};

/// A fitted probability is zero where it is needed as a weight denominator.
class PositivityError : public Error {
public:
    using Error::Error;
};

}  // namespace ivcea
