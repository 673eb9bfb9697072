#pragma once

#include <stdexcept>
#include <string>

namespace dynsl {

/// Base class for every error raised by the library. Carries the name of the
/// module that raised it so front ends can report "module: message".
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

// Input files do not match the declared column schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A field could not be parsed as a number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A record refers to something that does not exist or violates a cross-record
// invariant (unknown subject, measurement after the observed time).
class ReferentialError : public Error {
 public:
  using Error::Error;
};

// Run configuration cannot be satisfied (too few events for V folds, bad
// simulation parameters, calibration that fails to bracket).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Arguments outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A quantity needed for a weight or metric is not estimable from the data.
class EstimabilityError : public Error {
 public:
  using Error::Error;
};

// Model fitting failed (non-convergence, separation, rank deficiency).
class FitError : public Error {
 public:
  using Error::Error;
};

// Floating point breakdown: singular matrices, failed quadrature.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dynsl
