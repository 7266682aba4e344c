// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace matchkit {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autograd tape (non-scalar loss, consumed graph).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint produced under a different configuration.
class ConfigMismatchError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Missing, unreadable or insufficient data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Corrupt file contents.
class ChecksumError : public DataError {
 public:
  using DataError::DataError;
};

/// NaN/Inf produced by a forward op or a training step.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace matchkit
