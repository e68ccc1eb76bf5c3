#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mgptq {

// Base of every error thrown by the library. `exit_code()` is the process
// status the CLI maps the error to.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual int exit_code() const noexcept { return 2; }
};

// Shape or size disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid argument, configuration value or usage.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated input data.
class FormatError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

// Non-finite result or other numerical breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

class NotPositiveDefinite : public NumericError {
 public:
  NotPositiveDefinite(std::size_t pivot, const std::string& what)
      : NumericError(what), pivot_(pivot) {}

  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

}  // namespace mgptq
