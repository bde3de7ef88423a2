#pragma once

#include <stdexcept>
#include <string>

namespace ivsel {

/// Stable process exit codes; every library error maps onto one of them.
enum class ErrorCode : int {
  ok = 0,
  validation = 2,
  numerical = 3,
  io = 4,
};

/// Base of all library errors. `kind` is a short machine-readable tag
/// ("degenerate_cell", "no_solution", ...) that is stable across releases.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string kind, const std::string& message)
      : std::runtime_error(message), code_(code), kind_(std::move(kind)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  ErrorCode code_;
  std::string kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message, std::string kind = "validation")
      : Error(ErrorCode::validation, std::move(kind), message) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& message, std::string kind = "numerical")
      : Error(ErrorCode::numerical, std::move(kind), message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message, std::string kind = "io")
      : Error(ErrorCode::io, std::move(kind), message) {}
};

}  // namespace ivsel
