#pragma once

#include <stdexcept>
#include <string>

namespace bikeshare {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid model or experiment parameters.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// An ODE solution left its validity region (negative mass).
class IntegrationError : public Error {
public:
    using Error::Error;
};

/// Iterative procedure did not converge before its cap.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Exact state space too large for brute force.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Series that should share a time grid do not.
class AlignmentError : public Error {
public:
    using Error::Error;
};

/// Input file unreadable or structurally wrong.
class IngestError : public Error {
public:
    using Error::Error;
};

}  // namespace bikeshare
