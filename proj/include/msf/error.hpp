#pragma once

#include <stdexcept>
#include <string>

namespace msf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: shape mismatches, non-finite data, bad parameters.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// A metric whose value is undefined for the given inputs (zero RMSE, constant phantom).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Weight file failures. `kind()` distinguishes the three load failure modes.
class LoadError : public IoError {
 public:
  enum class Kind { Manifest, ShapeChain, PayloadLength };

  LoadError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Raised when a solver iterate stops being finite.
class DivergenceError : public Error {
 public:
  DivergenceError(int iteration, const std::string& what)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace msf
