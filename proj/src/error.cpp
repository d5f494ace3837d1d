// SPDX-License-Identifier: Apache-2.0

#include "kernsym/error.hpp"

namespace kernsym {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kZeroNorm: return "ZeroNorm";
    case ErrorCode::kNonSquareKernel: return "NonSquareKernel";
    case ErrorCode::kMissingWeight: return "MissingWeight";
    case ErrorCode::kWindowTooLarge: return "WindowTooLarge";
    case ErrorCode::kShapeUnderflow: return "ShapeUnderflow";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kMalformedHeader: return "MalformedHeader";
    case ErrorCode::kBadOffsets: return "BadOffsets";
    case ErrorCode::kUnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kBindingError: return "BindingError";
    case ErrorCode::kNoForwardCache: return "NoForwardCache";
    case ErrorCode::kEmptyImageSet: return "EmptyImageSet";
    case ErrorCode::kShiftTooLarge: return "ShiftTooLarge";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kEmptyProfile: return "EmptyProfile";
  }
  return "Unknown";
}

}  // namespace kernsym
