#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace texanno {

enum class ErrorCode {
  kImageTooSmall,
  kBounds,
  kValidation,
  kDanglingReference,
  kConfiguration,
  kIncompatible,
  kIntegrity,
  kConflict,
  kNotFound,
  kIo,
  kEmptyReport,
  kDegenerateHull,
  kRoster,
  kGeneration,
};

/// Machine-readable name, e.g. "image-too-small". Used in HTTP error bodies
/// and CLI diagnostics.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace texanno
