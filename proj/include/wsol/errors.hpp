#pragma once

#include <stdexcept>
#include <string>

namespace wsol {

// Base class for all library errors.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or rank mismatch between tensors.
class DimensionError : public Error {
  public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration value (strides, thresholds, class counts, ...).
class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Out-of-range index (class labels, channel selection).
class IndexError : public Error {
  public:
    explicit IndexError(const std::string& msg) : Error(msg) {}
};

// Violated call contract (non-scalar backward, missing label, ...).
class ContractError : public Error {
  public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Invalid object state (double backward without re-recording).
class StateError : public Error {
  public:
    explicit StateError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
  public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// File reading/writing and parse failures.
class IoError : public Error {
  public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace wsol
