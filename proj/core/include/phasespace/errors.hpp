#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace phasespace {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad cube families, grid mismatch, invalid config.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The grid cannot resolve a requested construction scale.
class ResolutionError : public Error {
 public:
  ResolutionError(const std::string& what, std::int64_t required_samples)
      : Error(what), required_samples_(required_samples) {}

  /// Smallest samples-per-axis that would satisfy the failed requirement
  /// (0 when no grid refinement helps).
  std::int64_t required_samples() const noexcept { return required_samples_; }

 private:
  std::int64_t required_samples_;
};

/// An identity that holds by construction was violated; indicates a bug or a
/// misconfigured discretisation rather than bad user input.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace phasespace
