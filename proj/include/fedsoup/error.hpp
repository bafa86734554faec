#pragma once

#include <stdexcept>
#include <string>

namespace fedsoup {

// Bad shapes, bad config values, empty inputs. Maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric that is not defined for its input (e.g. AUC with one class).
class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or failed numerical routines. Maps to exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedsoup
