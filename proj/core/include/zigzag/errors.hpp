#pragma once

#include <stdexcept>

namespace zigzag {

// Unreadable or internally inconsistent input data. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid run configuration. CLI exit code 3.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace zigzag
