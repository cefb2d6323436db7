#pragma once

#include <stdexcept>
#include <string>

namespace selset {

// Invalid user-supplied configuration, schema, or data file.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered during optimization or evaluation.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Recalibration cannot be performed (e.g. no accepted observations).
struct DegenerateError : std::runtime_error {
  explicit DegenerateError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace selset
