#pragma once

#include <stdexcept>
#include <string>

namespace nlgp {

// Bad user input: malformed config, inconsistent model spec, unusable CSV.
// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical breakdown: non-PD matrix after jitter escalation, NaN loss.
// The CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nlgp
