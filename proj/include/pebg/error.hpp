#pragma once

#include <stdexcept>
#include <string>

namespace pebg {

/// Broad failure categories; the CLI maps each one to a distinct exit code.
enum class ErrorCategory {
  kParse = 3,
  kData = 4,
  kConfig = 5,
  kNumerical = 6,
  kIo = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Malformed input text. `line` is 1-based; 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCategory::kParse,
              line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Structurally invalid data: empty datasets, isolated vertices, bad splits,
/// out-of-range indices, single-class metric inputs.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::kData, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

/// A loss or parameter became NaN/Inf. `term` names the offending quantity.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& term)
      : Error(ErrorCategory::kNumerical, "non-finite value in " + term), term_(term) {}

  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};

}  // namespace pebg
