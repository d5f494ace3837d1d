// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kernsym {

enum class ErrorCode {
  kInvalidArgument,
  kNonFinite,
  kZeroNorm,
  kNonSquareKernel,
  kMissingWeight,
  kWindowTooLarge,
  kShapeUnderflow,
  kShapeMismatch,
  kInvalidSpec,
  kIo,
  kTruncatedFile,
  kMalformedHeader,
  kBadOffsets,
  kUnsupportedDtype,
  kSchemaError,
  kBindingError,
  kNoForwardCache,
  kEmptyImageSet,
  kShiftTooLarge,
  kIndexOutOfRange,
  kDivergedLoss,
  kEmptyProfile,
};

std::string_view to_string(ErrorCode code);

/// The single exception type thrown by the library. `code()` identifies the
/// error family; `what()` names the offending layer or tensor where known.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kernsym
