#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace tensorial {

enum class ErrorKind {
  argument,
  shape,
  numeric,
  config,
  coverage,
  format,
  evaluator,
};

/// Base of every exception thrown by the library. The kind survives the trip
/// through the C API as a status code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ErrorKind::argument, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class CoverageError : public Error {
 public:
  CoverageError(std::size_t row, std::size_t col)
      : Error(ErrorKind::coverage, "pixel (" + std::to_string(row) + ", " + std::to_string(col) +
                                       ") is not covered by any patch"),
        row_(row),
        col_(col) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::format, what) {}
  FormatError(const std::string& what, std::size_t offset)
      : Error(ErrorKind::format, what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  /// Prefixes context to an existing error, keeping its offset.
  FormatError(const std::string& context, const FormatError& inner)
      : Error(ErrorKind::format, context + inner.what()), offset_(inner.offset_) {}
  std::optional<std::size_t> offset() const noexcept { return offset_; }

 private:
  std::optional<std::size_t> offset_;
};

class EvaluatorError : public Error {
 public:
  explicit EvaluatorError(const std::string& what) : Error(ErrorKind::evaluator, what) {}
};

}  // namespace tensorial
