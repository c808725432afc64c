#pragma once

#include <stdexcept>
#include <string>

namespace ivf {

// Base class for every error raised by the library. The CLI maps any of
// these onto exit status 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or unknown column in a CSV header.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Malformed field; `row` is the 1-based data row (header is row 0).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Quantity cannot be estimated from the data (e.g. an empty instrument arm).
class EstimationError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Numeric parameter out of range (alpha, gamma, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Inconsistent combination of options.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ivf
