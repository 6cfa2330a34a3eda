#pragma once

#include <stdexcept>
#include <string>

namespace panelamm {

// Every library failure derives from Error. The CLI maps the two families
// (configuration vs. data) onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration: malformed JSON, unknown keys, inconsistent model specs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Data: anything wrong with the panel itself or with values fed to an op.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, long row = -1)
      : DataError(what), row_(row) {}
  long row() const { return row_; }  // data row, counted from 1; -1 if unknown

 private:
  long row_;
};

class StructuralError : public DataError {
 public:
  using DataError::DataError;
};

class DomainError : public DataError {
 public:
  using DataError::DataError;
};

class RangeError : public DataError {
 public:
  using DataError::DataError;
};

class LengthError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class RankError : public DataError {
 public:
  using DataError::DataError;
};

class LookupError : public DataError {
 public:
  using DataError::DataError;
};

class PreconditionError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace panelamm
