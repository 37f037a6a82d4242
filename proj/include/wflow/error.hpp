#ifndef WFLOW_ERROR_HPP
#define WFLOW_ERROR_HPP

#include <stdexcept>
#include <string>

namespace wflow {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument or configuration value was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Two operands disagree on particle count or dimension.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A matrix that must be symmetric positive definite is not.
class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

/// A point left the domain of a mirror map (e.g. the open simplex).
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual, int iterations)
        : Error(what + " (residual " + std::to_string(residual) + " after " +
                std::to_string(iterations) + " iterations)"),
          residual_(residual),
          iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

class NewtonFailure : public ConvergenceError {
public:
    using ConvergenceError::ConvergenceError;
};

class SinkhornNonConvergence : public ConvergenceError {
public:
    using ConvergenceError::ConvergenceError;
};

/// The KL-mirror quadratic has no real root (negative discriminant eigenvalue).
class KlmDivergence : public Error {
public:
    using Error::Error;
};

}  // namespace wflow

#endif  // WFLOW_ERROR_HPP
