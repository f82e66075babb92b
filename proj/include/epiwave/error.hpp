#pragma once

#include <stdexcept>
#include <string>

namespace epiwave {

/// Invalid user input: presets, grids, config values.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A solver failed to meet its contract (non-convergence, bracket or residual failure).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const char* message) {
  if (!condition) throw ConfigError(message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ConfigError(message);
}

inline void ensure(bool condition, const char* message) {
  if (!condition) throw NumericalError(message);
}

inline void ensure(bool condition, const std::string& message) {
  if (!condition) throw NumericalError(message);
}

} // namespace detail
} // namespace epiwave
