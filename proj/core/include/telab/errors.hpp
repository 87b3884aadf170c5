#pragma once

#include <stdexcept>

namespace telab {

// Malformed experiment configs, bound specs, option values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or invalid input data: topology files, traces, model files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation could not produce usable numbers (infeasible constraint
// set, non-finite values).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace telab
