#pragma once

#include <stdexcept>
#include <string>

namespace vipr {

// Error hierarchy. The CLI maps each family onto a process exit code.

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad arguments or violated preconditions (usage error, exit 2).
struct ArgumentError : Error {
    using Error::Error;
};

// Degenerate numeric input (zero-norm quaternion and friends).
struct DegenerateInputError : ArgumentError {
    using ArgumentError::ArgumentError;
};

struct ShapeError : ArgumentError {
    using ArgumentError::ArgumentError;
};

// Malformed or missing data on disk (exit 3).
struct DataError : Error {
    using Error::Error;
};

struct FormatError : DataError {
    using DataError::DataError;
};

struct ParseError : DataError {
    using DataError::DataError;
};

// A prerequisite artifact (checkpoint) is missing or incompatible (exit 4).
struct DependencyError : Error {
    using Error::Error;
};

// Training diverged.
struct TrainingError : Error {
    using Error::Error;
};

}  // namespace vipr
