#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sspo {

enum class ErrorCode {
  kShapeMismatch,
  kUnsupportedPrimitive,
  kTimestepOutOfRange,
  kDegenerateWeight,
  kConditionOutOfRange,
  kIo,
  kFormatVersionMismatch,
  kChecksumMismatch,
  kIndexGap,
  kEmptyStore,
  kNonPositiveScale,
  kEmptyBatch,
  kEmptySet,
  kDivergedLoss,
  kInvalidArgument,
  kConfig,
};

std::string_view to_string(ErrorCode code);

// Every failure the library reports carries one of the codes above; callers
// that need to branch (the CLI maps them to exit codes) switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace sspo
