#pragma once

#include <stdexcept>
#include <string>

namespace marca {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  Validation,  ///< malformed or inconsistent input (exit 2)
  Io,          ///< unreadable / unwritable files (exit 3)
  Numerical,   ///< SVD failure, divergence (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error(ErrorKind::Validation, what) {}
};

/// Input is well-formed but carries no usable information (e.g. an all-zero
/// matrix where a span is requested).
class DegenerateInput : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::Numerical, what) {}
};

/// Raised when an ADMM iterate stops being finite.
class DivergedError : public NumericalError {
 public:
  DivergedError(const std::string& what, int iteration)
      : NumericalError(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

int exit_code(ErrorKind kind) noexcept;

}  // namespace marca
