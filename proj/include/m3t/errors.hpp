#pragma once

#include <stdexcept>
#include <string>

namespace m3t {

// Error taxonomy shared across the library. Every failure callers are
// expected to handle programmatically gets its own type; plain
// std::runtime_error is reserved for unrecoverable internal conditions.

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& msg)
      : std::runtime_error("shape mismatch: " + msg) {}
};

// CCC denominator is zero (both sequences constant with equal means) or
// fewer than two valid entries are available.
struct DegenerateInput : std::runtime_error {
  explicit DegenerateInput(const std::string& msg)
      : std::runtime_error("degenerate input: " + msg) {}
};

struct EmptyEvaluation : std::runtime_error {
  explicit EmptyEvaluation(const std::string& msg)
      : std::runtime_error("empty evaluation: " + msg) {}
};

// A training batch whose every loss term is degenerate; the batch is
// skipped and counted, never silently patched.
struct DegenerateBatch : std::runtime_error {
  explicit DegenerateBatch(const std::string& msg)
      : std::runtime_error("degenerate batch: " + msg) {}
};

struct IncompatibleCheckpoint : std::runtime_error {
  explicit IncompatibleCheckpoint(const std::string& msg)
      : std::runtime_error("incompatible checkpoint: " + msg) {}
};

struct MissingCheckpoint : std::runtime_error {
  explicit MissingCheckpoint(const std::string& msg)
      : std::runtime_error("missing checkpoint: " + msg) {}
};

struct StageOrderViolation : std::runtime_error {
  explicit StageOrderViolation(const std::string& msg)
      : std::runtime_error("stage order violation: " + msg) {}
};

struct AudioTooShort : std::runtime_error {
  explicit AudioTooShort(const std::string& msg)
      : std::runtime_error("audio too short: " + msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg)
      : std::runtime_error("config error: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg)
      : std::runtime_error("io error: " + msg) {}
};

}  // namespace m3t
