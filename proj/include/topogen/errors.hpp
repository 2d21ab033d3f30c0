#pragma once

#include <stdexcept>
#include <string>

namespace topogen {

// Bad arguments, malformed files, dimension mismatches.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid run configuration (unknown fields, out-of-range hyperparameters).
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

// NaN/Inf produced by a forward or backward pass.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A remote or mock backend failed after exhausting its retries.
class BackendError : public std::runtime_error {
 public:
  BackendError(const std::string& what, int attempts)
      : std::runtime_error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

// The backend answered, but the body did not follow the expected protocol.
class ProtocolError : public BackendError {
 public:
  ProtocolError(const std::string& what, std::string raw)
      : BackendError(what, 1), raw_(std::move(raw)) {}
  const std::string& raw_payload() const { return raw_; }

 private:
  std::string raw_;
};

}  // namespace topogen
