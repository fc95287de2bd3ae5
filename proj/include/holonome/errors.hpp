#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace holonome {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `offset` is the byte offset of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownIdentifierError : public Error {
 public:
  UnknownIdentifierError(const std::string& name, std::size_t offset)
      : Error("unknown identifier '" + name + "' at offset " + std::to_string(offset)),
        name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

/// log of non-positive, sqrt of negative, division by zero, NaN results.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Model configuration problems: syntax, dimensions, missing sections.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failures: singular coframes, non-SPD metrics, integrator and
/// solver breakdowns.
class NumericError : public Error {
 public:
  using Error::Error;
};

class RankError : public NumericError {
 public:
  using NumericError::NumericError;
};

class NoConvergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// A precondition on the input point (e.g. "must lie on the critical set")
/// does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace holonome
