#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace spdreg {

/// Base class for all spdreg errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite or otherwise malformed numerical input.
class InvalidInputError : public Error {
public:
    using Error::Error;
};

/// Dimension mismatch between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Matrix too close to singular for the requested operation.
class IllConditionedError : public Error {
public:
    using Error::Error;
};

/// Too few distinct label values to build the requested fuzzy partition.
class DegenerateLabelsError : public Error {
public:
    using Error::Error;
};

/// A fuzzy class received (numerically) zero total membership weight.
class EmptyClassError : public Error {
public:
    using Error::Error;
};

/// Frequency band outside the representable range for the sample rate.
class InvalidBandError : public Error {
public:
    using Error::Error;
};

/// A cross-validation fold ended up with too few test points.
class FoldTooSmallError : public Error {
public:
    using Error::Error;
};

/// File format or filesystem failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// Iterative solver hit its iteration cap. Carries the last iterate and the
/// gradient residual so callers can record the failure instead of losing it.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& msg, Eigen::MatrixXd last_iterate,
                        double residual, int iterations)
        : Error(msg),
          last_iterate_(std::move(last_iterate)),
          residual_(residual),
          iterations_(iterations) {}

    const Eigen::MatrixXd& last_iterate() const { return last_iterate_; }
    double residual() const { return residual_; }
    int iterations() const { return iterations_; }

private:
    Eigen::MatrixXd last_iterate_;
    double residual_;
    int iterations_;
};

}  // namespace spdreg
