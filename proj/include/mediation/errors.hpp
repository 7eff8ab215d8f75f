#ifndef MEDIATION_ERRORS_HPP
#define MEDIATION_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mediation {

/// Base of every error the library throws. `module()` names the subsystem
/// that raised it so the CLI can report "<module>: <message>".
class Error : public std::runtime_error {
public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

  /// Configuration-type errors are the caller's fault and map to exit code 2.
  virtual bool is_configuration() const noexcept { return false; }

private:
  std::string module_;
};

class ConfigError : public Error {
public:
  using Error::Error;
  bool is_configuration() const noexcept override { return true; }
};

/// A role column named in the configuration is absent from the source.
class SchemaError : public ConfigError {
public:
  SchemaError(const std::string& column, const std::string& what)
      : ConfigError("data", what), column_(column) {}
  const std::string& column() const noexcept { return column_; }

private:
  std::string column_;
};

class ParseError : public Error {
public:
  ParseError(std::size_t row, const std::string& what)
      : Error("data", what), row_(row) {}
  /// 1-based data row (header excluded).
  std::size_t row() const noexcept { return row_; }

private:
  std::size_t row_;
};

class ValidationError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

class ArgumentError : public Error {
public:
  using Error::Error;
};

class TrainingDivergence : public Error {
public:
  TrainingDivergence(int epoch, const std::string& what)
      : Error("learn", what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

private:
  int epoch_;
};

class PositivityError : public Error {
public:
  using Error::Error;
};

class UndefinedRatio : public Error {
public:
  using Error::Error;
};

} // namespace mediation

#endif // MEDIATION_ERRORS_HPP
