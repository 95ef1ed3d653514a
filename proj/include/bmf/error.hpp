#pragma once

#include <stdexcept>
#include <string>

namespace bmf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A distribution or model received a parameter outside its support.
class InvalidParameter : public Error {
  public:
    using Error::Error;
};

/// Cholesky/LU failed even after the jitter retries.
class DecompositionFailure : public Error {
  public:
    using Error::Error;
};

/// The sampler state stopped being finite.
class NumericalFailure : public Error {
  public:
    using Error::Error;
};

/// Malformed or unusable data: parse errors, empty matrices, non-integer
/// counts for Poisson models, infeasible splits.
class DataError : public Error {
  public:
    using Error::Error;
};

/// Invalid model, sampler, or experiment configuration.
class ConfigError : public Error {
  public:
    using Error::Error;
};

} // namespace bmf
