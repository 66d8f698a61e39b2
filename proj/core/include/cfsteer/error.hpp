#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cfsteer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad layer, size mismatch, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The forward pass produced a non-finite activation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Binary file could not be decoded. `kind()` tells which check failed.
class FormatError : public Error {
 public:
  enum class Kind { kIo, kBadMagic, kVersionMismatch, kCrcMismatch, kTruncated, kInvalidField };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Text input could not be parsed. Carries a 1-based line number and, when
/// relevant, the offending field name.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::string field, const std::string& what)
      : Error(what), line_(line), field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

}  // namespace cfsteer
