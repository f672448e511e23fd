#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace attnflow {

enum class ErrorCode {
  kMalformedFile,
  kShapeMismatch,
  kStochasticityViolation,
  kIoError,
  kIndexOutOfRange,
  kInvalidRange,
  kNotStochastic,
  kDimensionMismatch,
  kLengthMismatch,
  kTooShort,
  kMissingImportance,
  kEmptySpec,
  kInvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so
// callers (the CLI in particular) can report it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace attnflow
