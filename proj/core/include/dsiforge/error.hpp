#pragma once

#include <stdexcept>
#include <string>

namespace dsi {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kNumeric = 3,
  kGroundingCap = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Invalid configuration, malformed input file, or bad argument.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ExitCode::kConfig, what) {}
};

/// Rule-file syntax or schema error, with a 1-based source position.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, int line, int column)
      : ConfigError("line " + std::to_string(line) + ", column " +
                    std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

/// Non-finite values, shape mismatches and other numeric failures.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ExitCode::kNumeric, what) {}
};

class ShapeError : public NumericError {
 public:
  using NumericError::NumericError;
};

class GroundingCapError : public Error {
 public:
  explicit GroundingCapError(const std::string& what)
      : Error(ExitCode::kGroundingCap, what) {}
};

}  // namespace dsi
