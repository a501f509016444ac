#pragma once

#include <stdexcept>
#include <string>

namespace cmlab {

// Bad argument to a library operation (out-of-range index, non-finite entry).
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

// Iterative numerics failed (eigensolver did not converge, spectral drift).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Requested state space exceeds the desk-scale limit.
class CapacityError : public std::runtime_error {
 public:
  explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

// Experiment spec rejected; message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cmlab
