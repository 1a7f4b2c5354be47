#pragma once

#include <stdexcept>
#include <string>

namespace xpass {

// Base for every error the library raises. The category decides the CLI exit
// code: usage/config/dimension/index problems map to 2, data problems to 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

// Raised when a forward pass produces NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace xpass
