#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tofr {

/// Error categories. The CLI maps each category onto a distinct exit code.
enum class ErrorKind {
  kConfig,      // bad configuration, shape mismatch between layers
  kTopology,    // a network layer collapses to a non-positive size
  kData,        // inconsistent inputs (image sizes, missing ground truth)
  kFormat,      // malformed file content
  kGeometry,    // degenerate marker layout
  kNumeric,     // NaN/Inf during inference or training
  kCheckpoint,  // checkpoint container problems, see CheckpointError::Code
  kIo,          // filesystem failures
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class CheckpointError : public Error {
 public:
  enum class Code { kIo, kBadMagic, kUnsupportedVersion, kCorrupt };

  CheckpointError(Code code, const std::string& message)
      : Error(ErrorKind::kCheckpoint, message), code_(code) {}

  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

/// Raised from the training loop; carries the step at which it happened and
/// the most recent checkpoint written before the failure (may be empty).
class TrainingError : public Error {
 public:
  TrainingError(const std::string& message, std::uint64_t step,
                std::string last_checkpoint)
      : Error(ErrorKind::kNumeric, message),
        step_(step),
        last_checkpoint_(std::move(last_checkpoint)) {}

  std::uint64_t step() const noexcept { return step_; }
  const std::string& last_checkpoint() const noexcept { return last_checkpoint_; }

 private:
  std::uint64_t step_;
  std::string last_checkpoint_;
};

/// Warning sink. Defaults to stderr; tests swap it to capture messages.
using WarningHandler = void (*)(const std::string&);
void set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace tofr
