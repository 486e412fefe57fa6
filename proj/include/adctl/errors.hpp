#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace adctl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgumentError : public Error {
public:
    using Error::Error;
};

/// A function evaluation produced NaN or Inf.
class NonFiniteError : public Error {
public:
    NonFiniteError(const std::string& what, std::size_t output_index)
        : Error(what), output_index_(output_index) {}
    std::size_t output_index() const noexcept { return output_index_; }

private:
    std::size_t output_index_;
};

/// The function has no Dual-valued evaluation path (e.g. a sweep containing Newton blocks).
class NotDifferentiableError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& msg, int line, int column)
        : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg),
          line_(line),
          column_(column) {}
    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

class UndeclaredIdentifierError : public ParseError {
public:
    UndeclaredIdentifierError(const std::string& name, int line, int column)
        : ParseError("undeclared identifier '" + name + "'", line, column), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class DuplicateDeclarationError : public ParseError {
public:
    using ParseError::ParseError;
};

class MissingBindingError : public Error {
public:
    using Error::Error;
};

class StructuralSingularityError : public Error {
public:
    StructuralSingularityError(const std::string& what, std::vector<std::size_t> unmatched)
        : Error(what), unmatched_(std::move(unmatched)) {}
    const std::vector<std::size_t>& unmatched_equations() const noexcept { return unmatched_; }

private:
    std::vector<std::size_t> unmatched_;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double final_residual)
        : Error(what), final_residual_(final_residual) {}
    double final_residual() const noexcept { return final_residual_; }

private:
    double final_residual_;
};

class SingularBlockError : public Error {
public:
    using Error::Error;
};

class RankDeficiencyError : public Error {
public:
    RankDeficiencyError(const std::string& what, std::vector<std::string> columns)
        : Error(what), columns_(std::move(columns)) {}
    const std::vector<std::string>& dependent_columns() const noexcept { return columns_; }

private:
    std::vector<std::string> columns_;
};

class ReplacementIncompleteError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class UncontrollableError : public Error {
public:
    using Error::Error;
};

class PlacementError : public Error {
public:
    using Error::Error;
};

/// Innovation covariance is not positive definite.
class ConditioningError : public Error {
public:
    using Error::Error;
};

}  // namespace adctl
