#pragma once

#include <stdexcept>
#include <string>

namespace zol {

// Non-finite values, division by zero, singular systems.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension mismatches and non-scalar loss nodes.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad config keys, values out of range, unknown tags.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Corrupt or truncated on-disk artifacts. Carries the byte offset of the
// first bad byte.
struct FormatError : std::runtime_error {
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::size_t byte_offset;
};

struct PreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failures: missing paths, unwritable targets.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Zero-variance inputs to statistics that require spread.
struct DegenerateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss during iterative optimization. Carries the failing step.
struct TrainingError : std::runtime_error {
  TrainingError(const std::string& what, long step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        failed_step(step) {}
  long failed_step;
};

}  // namespace zol
