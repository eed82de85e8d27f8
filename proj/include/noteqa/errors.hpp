#pragma once

#include <stdexcept>
#include <string>

namespace noteqa {

// Base class for all library errors. Subtypes exist so callers (mainly the
// CLI) can map failures onto distinct exit codes.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input at the ingestion boundary (XML/JSON). Carries the source
// position when the underlying reader can provide one.
class ParseError : public Error {
  public:
    ParseError(const std::string& what, int line = 0, int column = 0)
        : Error(format(what, line, column)), line_(line), column_(column) {}

    int line() const { return line_; }
    int column() const { return column_; }

  private:
    static std::string format(const std::string& what, int line, int column) {
        if (line <= 0) return what;
        return what + " (line " + std::to_string(line) + ", column " +
               std::to_string(column) + ")";
    }

    int line_ = 0;
    int column_ = 0;
};

// Structurally valid input that violates a model invariant (duplicate ids,
// unknown labels, dangling references...).
class ValidationError : public Error {
  public:
    using Error::Error;
};

// Generation or scoring backend failure after retries were exhausted.
class BackendError : public Error {
  public:
    using Error::Error;
};

// Threshold calibration cannot proceed (e.g. single-class labels).
class CalibrationError : public Error {
  public:
    using Error::Error;
};

// Answer assembly cannot produce a format-compliant result.
class AssemblyError : public Error {
  public:
    using Error::Error;
};

}  // namespace noteqa
