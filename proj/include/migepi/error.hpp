#pragma once

#include <stdexcept>
#include <string>

namespace migepi {

// Numeric values are part of the C API (see migepi.h); do not reorder.
enum class ErrorCode : int {
  Ok = 0,
  InvalidArgument = 1,
  DimensionMismatch = 2,
  NegativeValue = 3,
  NonFinite = 4,
  NotErgodic = 5,
  ZeroEmigration = 6,
  DominanceNotEstablished = 7,
  SingularShift = 8,
  NotSemiConstant = 9,
  ReducibleBlocks = 10,
  WrongClassification = 11,
  AlreadyConverged = 12,
  NonMonotone = 13,
  StepFailure = 14,
  BracketFailure = 15,
  ConfigError = 16,
  IoError = 17,
  Internal = 99,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace migepi
