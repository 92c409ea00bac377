#pragma once

#include <stdexcept>
#include <string>

namespace iclv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model or configuration problem: unknown covariate/attribute keys, missing
/// coefficients, inconsistent specs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The spec cannot be identified (e.g. a latent with fewer than two indicators).
class IdentificationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Parameter values outside their valid domain (non-monotone thresholds,
/// negative scales, non-finite numbers).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Math domain violation such as a choice set with nothing available.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line and column when known.
class InputError : public Error {
 public:
  InputError(const std::string& what, int line = 0, int column = 0)
      : Error(format(what, line, column)), line_(line), column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, int line, int column) {
    if (line <= 0) return what;
    std::string out = "line " + std::to_string(line);
    if (column > 0) out += ", column " + std::to_string(column);
    return out + ": " + what;
  }

  int line_;
  int column_;
};

}  // namespace iclv
