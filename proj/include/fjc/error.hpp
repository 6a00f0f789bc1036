#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fjc {

enum class ErrorKind {
  ShapeMismatch,
  UnsupportedRank,
  InvalidAttribute,
  ParseError,
  ValidationError,
  CycleError,
  VerifyError,
  UnsupportedOp,
  KernelMissing,
  DuplicateSymbol,
  RecursionDetected,
  FixpointNotReached,
  InputMismatch,
  OutOfBounds,
  TypeMismatch,
  ResourceExhausted,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure in the compiler and runtime surfaces as an Error tagged with
/// the kind named in the module contracts.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Text-format errors carry a 1-based source location.
class ParseError : public Error {
 public:
  ParseError(int line, int column, const std::string& message)
      : Error(ErrorKind::ParseError, std::to_string(line) + ":" +
                                         std::to_string(column) + ": " +
                                         message),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace fjc
