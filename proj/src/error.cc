#include "maskmotion/error.h"

namespace maskmotion {

std::string_view CategoryName(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidArgument: return "invalid_argument";
    case ErrorCategory::kShapeMismatch: return "shape_mismatch";
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kUsage: return "usage";
    case ErrorCategory::kNumeric: return "numeric";
    case ErrorCategory::kInternal: return "internal";
  }
  return "unknown";
}

}  // namespace maskmotion
