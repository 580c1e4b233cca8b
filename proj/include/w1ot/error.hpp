// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace w1ot {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, singular matrices, divergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// API misuse (wrong call order, empty inputs, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input data.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace w1ot
