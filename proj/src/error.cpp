#include "attnflow/error.hpp"

namespace attnflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedFile: return "MalformedFile";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kStochasticityViolation: return "StochasticityViolation";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kInvalidRange: return "InvalidRange";
    case ErrorCode::kNotStochastic: return "NotStochastic";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kTooShort: return "TooShort";
    case ErrorCode::kMissingImportance: return "MissingImportance";
    case ErrorCode::kEmptySpec: return "EmptySpec";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace attnflow
