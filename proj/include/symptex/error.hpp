#pragma once

#include <stdexcept>
#include <string>

namespace symptex {

/// Bad input data or configuration. Maps to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model backend could not produce a generation. Maps to exit code 3.
class BackendError : public std::runtime_error {
 public:
  BackendError(const std::string& what, int status = 0)
      : std::runtime_error(what), status_(status) {}

  /// Last transport status seen; 0 when no HTTP response arrived.
  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace symptex
