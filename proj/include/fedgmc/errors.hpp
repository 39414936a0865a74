#pragma once

#include <stdexcept>
#include <string>

namespace fedgmc {

// Shapes of operands disagree or a matrix is not square where required.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A scalar or configuration parameter is outside its admissible range.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input values are non-finite or otherwise invalid (labels out of range, ...).
struct ValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operation called on an object that cannot support it (empty train mask, ...).
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Degenerate geometry: coincident anchors, antipodal collapse.
struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite gradient or loss during optimization.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Persisted artifact is corrupt, truncated or from an incompatible version.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fedgmc
