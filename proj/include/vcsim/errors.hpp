#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vcsim {

// Input that does not satisfy a documented invariant.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed text input. Carries the 1-based line number of the bad row.
class ParseError : public ValidationError {
public:
  ParseError(std::size_t line, const std::string& message)
      : ValidationError("line " + std::to_string(line) + ": " + message),
        line_(line),
        message_(message) {}

  ParseError(const std::string& file, std::size_t line, const std::string& message)
      : ValidationError(file + ":" + std::to_string(line) + ": " + message),
        line_(line),
        message_(message) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& message() const noexcept { return message_; }

private:
  std::size_t line_;
  std::string message_;
};

// A topology or session that cannot be simulated (missing link traces, bad references).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Path pruning was asked to work from fewer than two samples on some path.
class InsufficientHistory : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace vcsim
