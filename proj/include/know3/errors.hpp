#pragma once

#include <stdexcept>
#include <string>

namespace know3 {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration, flags, or missing input files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent data (TSV lines, checkpoints, datasets).
class DataError : public Error {
 public:
  using Error::Error;
};

// Failure talking to a model backend, after retries.
class BackendError : public Error {
 public:
  BackendError(std::string role, const std::string& what)
      : Error(role.empty() ? what : role + ": " + what), role_(std::move(role)) {}
  explicit BackendError(const std::string& what) : BackendError("", what) {}

  const std::string& role() const { return role_; }

 private:
  std::string role_;
};

}  // namespace know3
