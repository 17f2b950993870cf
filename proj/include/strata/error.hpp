#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace strata {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input file does not match the expected column layout.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A cell could not be read as a number. `row` is the 1-based data row.
class ParseError : public Error {
public:
    ParseError(const std::string& what, long row) : Error(what), row_(row) {}
    long row() const noexcept { return row_; }

private:
    long row_;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// The problem has no penalized coordinate left to drive (e.g. every weight infinite).
class DegenerateProblem : public Error {
public:
    using Error::Error;
};

/// A search (e.g. for the fusion threshold of a grid) found nothing below its cap.
class NotFound : public Error {
public:
    using Error::Error;
};

/// Raised when an iterative solver hits its iteration cap. Carries the best
/// iterate seen and the optimality residual at that iterate.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, Eigen::VectorXd best, double residual)
        : Error(what), best_(std::move(best)), residual_(residual) {}
    const Eigen::VectorXd& best_iterate() const noexcept { return best_; }
    double residual() const noexcept { return residual_; }

private:
    Eigen::VectorXd best_;
    double residual_;
};

} // namespace strata
