#pragma once

#include <stdexcept>
#include <string>

namespace costtune {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad caller-supplied value (multiplier, time, selectivity...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Query description that violates its invariants (e.g. disconnected join graph).
class InvalidQuery : public Error {
public:
    using Error::Error;
};

/// Plan that cannot exist for its query (index scan without an index).
class InvalidPlan : public Error {
public:
    using Error::Error;
};

/// Enumeration would exceed a configured cap.
class TooLarge : public Error {
public:
    using Error::Error;
};

/// Execution backend failure; carries the child diagnostic when there is one.
class BackendError : public Error {
public:
    using Error::Error;
};

/// Workload/JSON input failed to parse or validate. The message names the field.
class LoadError : public Error {
public:
    using Error::Error;
};

} // namespace costtune
