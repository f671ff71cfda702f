#pragma once

#include <stdexcept>
#include <string>

namespace cardiofuse {

/// Base for every error raised by the library. The category decides the
/// process exit code used by the command-line front end.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration (exit 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Unreadable, malformed or semantically invalid input data (exit 3).
class DataError : public Error {
public:
    using Error::Error;
};

/// File-format violation in a WAV, scalogram cache or checkpoint.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

/// Model construction, geometry or checkpoint problem (exit 4).
class ModelError : public Error {
public:
    using Error::Error;
};

/// Evaluation is undefined for the given scores (exit 5).
class EvalError : public Error {
public:
    using Error::Error;
};

} // namespace cardiofuse
