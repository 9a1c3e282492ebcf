#pragma once

#include <stdexcept>
#include <string>

namespace wmvqa {

// Error families map one-to-one onto CLI exit codes (see tools/wmvqa.cpp).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad manifests, configs, specs or arguments. Exit code 1.
struct ValidationError : Error {
  using Error::Error;
};

// Manifest line that failed to parse. Carries the 1-based line number.
struct ParseError : ValidationError {
  ParseError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_no(line) {}
  std::size_t line_no;
};

// Unreadable, corrupt or unsupported files.
struct IoError : Error {
  using Error::Error;
};

// Model endpoint unreachable or misbehaving. Exit code 2.
struct TransportError : Error {
  using Error::Error;
};

// 401/403 from the endpoint: the run must stop immediately.
struct AuthError : TransportError {
  using TransportError::TransportError;
};

// Tensor dumps that cannot be analyzed (shape/metadata mismatch). Exit code 3.
struct AnalysisInputError : Error {
  using Error::Error;
};

}  // namespace wmvqa
