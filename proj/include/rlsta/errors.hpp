#pragma once

#include <stdexcept>
#include <string>

namespace rlsta {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: bad records, violated invariants, bad configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A backend call failed. Transport problems are retryable, malformed replies are not.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable, std::string payload = {})
      : Error(what), retryable_(retryable), payload_(std::move(payload)) {}

  bool retryable() const noexcept { return retryable_; }
  const std::string& payload() const noexcept { return payload_; }

 private:
  bool retryable_;
  std::string payload_;
};

// The backend does not support the requested operation (scoring, enumeration).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// A judge reply could not be parsed into the expected schema.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::string raw_output)
      : Error(what), raw_output_(std::move(raw_output)) {}

  const std::string& raw_output() const noexcept { return raw_output_; }

 private:
  std::string raw_output_;
};

// Numerical failure during optimization (non-finite gradient, etc.).
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::string diagnostic)
      : Error(what), diagnostic_(std::move(diagnostic)) {}

  const std::string& diagnostic() const noexcept { return diagnostic_; }

 private:
  std::string diagnostic_;
};

}  // namespace rlsta
