#pragma once

#include <stdexcept>
#include <string>

namespace mpac {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller-supplied value violates a precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// An object is used in a way its current state does not allow
// (stale tape, non-finite loss, ...).
class InvalidState : public Error {
 public:
  using Error::Error;
};

// Run configuration is inconsistent or incomplete; message names the field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A file could not be parsed; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, long line = -1)
      : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required (gradients, metrics).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mpac
