#pragma once

#include <stdexcept>
#include <string>

namespace cdg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input file.
class IngestError : public Error {
 public:
  using Error::Error;
};

/// Invalid pipeline configuration (dates out of range, unknown assets, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Statistic undefined for the given sample.
class StatError : public Error {
 public:
  using Error::Error;
};

/// Distribution or model parameters outside their admissible domain.
class ParamError : public Error {
 public:
  using Error::Error;
};

/// Function evaluated outside its domain (e.g. copula density on the cube boundary).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Matrix not positive definite, singular, or otherwise unusable.
class MatrixError : public Error {
 public:
  using Error::Error;
};

/// Estimation failed to converge or produced an unusable optimum.
class FitError : public Error {
 public:
  using Error::Error;
};

/// Non-finite term encountered while evaluating a likelihood.
class EvalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdg
