// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "kernsym/error.hpp"

namespace kernsym {

/// Process exit codes of the kernsym tool.
namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kFlagged = 1;  // arith --strict with uneven layers
inline constexpr int kParse = 2;
inline constexpr int kShape = 3;
inline constexpr int kEmptyImages = 4;
inline constexpr int kDiverged = 5;
}  // namespace exit_code

int exit_code_for(ErrorCode code);

/// Runs the tool with argv-style `args` (args[0] is the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kernsym
