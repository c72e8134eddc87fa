#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cdft {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration: unresolved ids, missing classes, out-of-range parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An assertion template that does not match its predicate declarations.
class MalformedTemplate : public Error {
 public:
  using Error::Error;
};

/// A grounding that asserts an atom with both polarities.
class ContradictionError : public Error {
 public:
  using Error::Error;
};

/// Frames pushed out of order into a temporal buffer.
class OrderingError : public Error {
 public:
  using Error::Error;
};

/// CIF requested with no inconsistencies before fine-tuning.
class UndefinedCif : public Error {
 public:
  using Error::Error;
};

/// Diagnostic from the rules / groundings parsers. Line and column are
/// 1-based; column 0 means "whole line".
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& message)
      : Error("line " + std::to_string(line) + ":" + std::to_string(column) +
              ": " + message),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Syntax is fine but a cross-reference or declaration rule is violated.
class SemanticError : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace cdft
