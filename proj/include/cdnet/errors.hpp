#pragma once

#include <stdexcept>
#include <string>

namespace cdnet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor dimensions disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An invalid configuration (layer geometry, network toggles, hyperparameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or mismatched files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A quantity is undefined for the given input (single-class AUC, empty lung).
class UndefinedError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdnet
