#pragma once

#include <stdexcept>
#include <string>

namespace pslab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of an operation (|b| >= 1, diagonal pairs, ...).
struct DomainError : Error {
    using Error::Error;
};

/// A documented precondition was not met by the caller.
struct PreconditionError : Error {
    using Error::Error;
};

/// Truncated limits or quadratures that did not converge.
struct NumericError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ValidationError : Error {
    using Error::Error;
};

/// An enumeration or allocation exceeded its configured budget.
struct ResourceError : Error {
    using Error::Error;
};

/// Not enough populated windows / scales / samples for a fit.
struct InsufficientDataError : Error {
    using Error::Error;
};

}  // namespace pslab
