#include "texanno/errors.hpp"

namespace texanno {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kImageTooSmall: return "image-too-small";
    case ErrorCode::kBounds: return "bounds";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kDanglingReference: return "dangling-reference";
    case ErrorCode::kConfiguration: return "configuration";
    case ErrorCode::kIncompatible: return "incompatible";
    case ErrorCode::kIntegrity: return "integrity";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kEmptyReport: return "empty-report";
    case ErrorCode::kDegenerateHull: return "degenerate-hull";
    case ErrorCode::kRoster: return "roster";
    case ErrorCode::kGeneration: return "generation";
  }
  return "unknown";
}

}  // namespace texanno
