#pragma once

#include <stdexcept>
#include <string>

namespace tsgps {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor / matrix dimension mismatch. Message names both shapes.
struct ShapeError : Error {
    using Error::Error;
};

/// Invalid argument to an operation (bad temperature, rate, index, ...).
struct ParamError : Error {
    using Error::Error;
};

/// Malformed or inconsistent input data (files, matrices, labels).
struct DataError : Error {
    using Error::Error;
};

/// Invalid model or run configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// I/O failures and checkpoint integrity violations.
struct IoError : Error {
    using Error::Error;
};

/// Metric is undefined for the given input (e.g. single-class ROC).
struct MetricError : Error {
    using Error::Error;
};

} // namespace tsgps
