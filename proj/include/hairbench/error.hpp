#pragma once

#include <stdexcept>
#include <string>

namespace hairbench {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (shapes, sizes, ranges).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: bad model preset, bad hyperparameters, too-small images.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing or unreadable input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced by the engine, or a non-finite gradient during training.
class NumericalFault : public Error {
 public:
  using Error::Error;
};

/// A statistic is undefined for the sample (constant vector, all-zero differences).
class DegenerateSample : public Error {
 public:
  using Error::Error;
};

}  // namespace hairbench
