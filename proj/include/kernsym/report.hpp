// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kernsym/conv_arith.hpp"
#include "kernsym/consistency.hpp"
#include "kernsym/symmetry.hpp"

namespace kernsym {

inline constexpr std::string_view kToolName = "kernsym";
inline constexpr std::string_view kToolVersion = "0.1.0";

struct InputDigest {
  std::string path;
  std::string sha256;
};

struct GenerationInfo {
  std::string tool_version{kToolVersion};
  std::vector<InputDigest> inputs;
};

std::string sha256_hex(std::span<const std::uint8_t> bytes);
InputDigest digest_file(const std::filesystem::path& path);

/// Header `layer,index,k,score,defined,strided`, one row per scored layer.
/// Strided layers carry a '*' suffix on the name; undefined scores leave
/// the score field empty.
std::string profile_to_csv(const SymmetryProfile& profile);
SymmetryProfile profile_from_csv(std::string_view text);

std::string profile_to_json(const SymmetryProfile& profile, const GenerationInfo& info);
SymmetryProfile profile_from_json(std::string_view text);

namespace svg_layout {
inline constexpr double kChartHeight = 200.0;
inline constexpr double kBarWidth = 20.0;
inline constexpr double kBarPitch = 28.0;
inline constexpr double kLeft = 56.0;
inline constexpr double kTop = 36.0;
}  // namespace svg_layout

/// Bar chart: one <rect class="bar"> per defined score on a [0, 1] axis,
/// a gap marker for undefined ones. Throws Error{kEmptyProfile}.
std::string emit_svg_chart(const SymmetryProfile& profile);

std::string lint_to_text(const LintReport& report);
std::string lint_to_json(const LintReport& report, const std::optional<Extent2>& suggestion,
                         bool suggested, const GenerationInfo& info);

std::string consistency_to_text(const ConsistencyReport& report,
                                const std::vector<std::string>& image_names);
std::string consistency_to_json(const ConsistencyReport& report,
                                const std::vector<std::string>& image_names, const GenerationInfo& info);

}  // namespace kernsym
