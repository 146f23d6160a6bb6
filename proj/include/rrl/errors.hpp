#pragma once

#include <stdexcept>
#include <string>

namespace rrl {

// Base for every failure the lab reports on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed data that violates a contract (vocab mismatch, shape mismatch).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Invalid or infeasible configuration. `field` is the dotted config path.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Violated precondition of a pure function (empty input, length mismatch).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during training or attribution.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace rrl
