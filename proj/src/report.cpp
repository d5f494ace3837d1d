// SPDX-License-Identifier: Apache-2.0

#include "kernsym/report.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <sstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "kernsym/error.hpp"

namespace kernsym {

namespace {

using json = nlohmann::ordered_json;

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

std::size_t parse_size(const std::string& s, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kSchemaError, fmt::format("csv line {}: '{}' is not an integer", line, s));
  }
  return v;
}

bool parse_bool(const std::string& s, std::size_t line) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw Error(ErrorCode::kSchemaError, fmt::format("csv line {}: '{}' is not true/false", line, s));
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

json info_json(const GenerationInfo& info) {
  json inputs = json::array();
  for (const auto& d : info.inputs) inputs.push_back({{"path", d.path}, {"sha256", d.sha256}});
  return {{"tool", kToolName}, {"version", info.tool_version}, {"inputs", std::move(inputs)}};
}

std::string extent_text(Extent2 e) { return fmt::format("{}x{}", e.h, e.w); }

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIo, "sha256: digest failed");
  }
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

InputDigest digest_file(const std::filesystem::path& path) {
  return {path.string(), sha256_hex(read_file_bytes(path))};
}

std::string profile_to_csv(const SymmetryProfile& profile) {
  std::ostringstream out;
  out << "layer,index,k,score,defined,strided\n";
  for (const LayerSymmetry& l : profile.layers) {
    out << csv_field(l.display_name()) << ',' << l.index << ',' << l.score.kernel_side << ',';
    if (l.score.defined) out << fmt::format("{:.17g}", l.score.value);
    out << ',' << (l.score.defined ? "true" : "false") << ',' << (l.strided ? "true" : "false") << '\n';
  }
  return out.str();
}

SymmetryProfile profile_from_csv(std::string_view text) {
  SymmetryProfile profile;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "layer,index,k,score,defined,strided") {
        throw Error(ErrorCode::kSchemaError, "csv: unexpected header");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw Error(ErrorCode::kSchemaError, fmt::format("csv line {}: expected 6 fields", line_no));
    LayerSymmetry l;
    l.strided = parse_bool(f[5], line_no);
    l.score.layer_name = f[0];
    if (l.strided && !l.score.layer_name.empty() && l.score.layer_name.back() == '*') {
      l.score.layer_name.pop_back();
    }
    l.index = parse_size(f[1], line_no);
    l.score.kernel_side = parse_size(f[2], line_no);
    l.score.trivial = l.score.kernel_side == 1;
    l.score.defined = parse_bool(f[4], line_no);
    if (l.score.defined) {
      const auto [ptr, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), l.score.value);
      if (ec != std::errc() || ptr != f[3].data() + f[3].size()) {
        throw Error(ErrorCode::kSchemaError, fmt::format("csv line {}: bad score '{}'", line_no, f[3]));
      }
    }
    profile.layers.push_back(std::move(l));
  }
  return profile;
}

std::string profile_to_json(const SymmetryProfile& profile, const GenerationInfo& info) {
  json layers = json::array();
  for (const LayerSymmetry& l : profile.layers) {
    json o = json::object();
    o["name"] = l.score.layer_name;
    o["display_name"] = l.display_name();
    o["index"] = l.index;
    o["k"] = l.score.kernel_side;
    o["score"] = l.score.defined ? json(l.score.value) : json(nullptr);
    o["defined"] = l.score.defined;
    o["strided"] = l.strided;
    o["trivial"] = l.score.trivial;
    layers.push_back(std::move(o));
  }
  json doc = {{"report", "symmetry_profile"}, {"generator", info_json(info)}, {"model", profile.model},
              {"layers", std::move(layers)}};
  return doc.dump(2) + "\n";
}

SymmetryProfile profile_from_json(std::string_view text) {
  const json doc = json::parse(text.begin(), text.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("layers")) {
    throw Error(ErrorCode::kSchemaError, "profile json: not a symmetry profile document");
  }
  SymmetryProfile profile;
  try {
    profile.model = doc.at("model").get<std::string>();
    for (const auto& o : doc.at("layers")) {
      LayerSymmetry l;
      l.index = o.at("index").get<std::size_t>();
      l.strided = o.at("strided").get<bool>();
      l.score.layer_name = o.at("name").get<std::string>();
      l.score.kernel_side = o.at("k").get<std::size_t>();
      l.score.defined = o.at("defined").get<bool>();
      l.score.trivial = o.at("trivial").get<bool>();
      if (l.score.defined) l.score.value = o.at("score").get<double>();
      profile.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, fmt::format("profile json: {}", e.what()));
  }
  return profile;
}

std::string emit_svg_chart(const SymmetryProfile& profile) {
  using namespace svg_layout;
  if (profile.layers.empty()) throw Error(ErrorCode::kEmptyProfile, "emit_svg_chart: empty profile");

  std::size_t longest = 1;
  for (const auto& l : profile.layers) longest = std::max(longest, l.display_name().size());
  const double label_band = 12.0 + 6.5 * static_cast<double>(longest);
  const double plot_width = kBarPitch * static_cast<double>(profile.layers.size());
  const double width = kLeft + plot_width + 20.0;
  const double height = kTop + kChartHeight + label_band + 10.0;
  const double base = kTop + kChartHeight;

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{:.1f}\" height=\"{:.1f}\" "
      "viewBox=\"0 0 {:.1f} {:.1f}\" font-family=\"sans-serif\">\n",
      width, height, width, height);
  out << fmt::format("  <title>{}</title>\n", xml_escape("Mean-kernel symmetry: " + profile.model));
  out << fmt::format("  <text x=\"{:.1f}\" y=\"18\" font-size=\"13\">{}</text>\n", kLeft,
                     xml_escape(profile.model.empty() ? "symmetry profile" : profile.model));

  for (double tick : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double y = base - tick * kChartHeight;
    out << fmt::format(
        "  <line class=\"grid\" x1=\"{:.1f}\" y1=\"{:.2f}\" x2=\"{:.1f}\" y2=\"{:.2f}\" stroke=\"#ddd\"/>\n",
        kLeft, y, kLeft + plot_width, y);
    out << fmt::format(
        "  <text x=\"{:.1f}\" y=\"{:.2f}\" font-size=\"10\" text-anchor=\"end\">{:.2f}</text>\n",
        kLeft - 6.0, y + 3.0, tick);
  }
  out << fmt::format("  <line class=\"axis\" x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n",
                     kLeft, kTop, base);
  out << fmt::format("  <line class=\"axis\" x1=\"{0:.1f}\" y1=\"{2:.1f}\" x2=\"{1:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n",
                     kLeft, kLeft + plot_width, base);

  for (std::size_t i = 0; i < profile.layers.size(); ++i) {
    const LayerSymmetry& l = profile.layers[i];
    const double x = kLeft + kBarPitch * static_cast<double>(i) + (kBarPitch - kBarWidth) / 2.0;
    const double cx = x + kBarWidth / 2.0;
    if (l.score.defined) {
      const double h = l.score.value * kChartHeight;
      const char* fill = l.strided ? "#d62728" : "#1f77b4";
      out << fmt::format(
          "  <rect class=\"bar\" x=\"{:.2f}\" y=\"{:.4f}\" width=\"{:.1f}\" height=\"{:.4f}\" fill=\"{}\"/>\n",
          x, base - h, kBarWidth, h, fill);
      out << fmt::format(
          "  <text class=\"value\" x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"8\" text-anchor=\"middle\">{:.3f}</text>\n",
          cx, base - h - 3.0, l.score.value);
    } else {
      out << fmt::format(
          "  <line class=\"gap\" x1=\"{:.2f}\" y1=\"{:.1f}\" x2=\"{:.2f}\" y2=\"{:.1f}\" stroke=\"#888\" "
          "stroke-dasharray=\"3,3\"/>\n",
          cx, kTop, cx, base);
      out << fmt::format(
          "  <text class=\"value\" x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"8\" text-anchor=\"middle\">n/a</text>\n",
          cx, base - 3.0);
    }
    out << fmt::format(
        "  <text class=\"label\" transform=\"translate({:.2f},{:.1f}) rotate(60)\" font-size=\"10\">{}</text>\n",
        cx - 3.0, base + 8.0, xml_escape(l.display_name()));
  }
  out << "</svg>\n";
  return out.str();
}

std::string lint_to_text(const LintReport& report) {
  std::ostringstream out;
  out << fmt::format("model {} input {}\n", report.model, extent_text(report.input));
  out << fmt::format("{:<4} {:<20} {:<16} {:>9} {:>9} {:>8} {:>7} {:>9} {:>9}  {}\n", "idx", "layer", "kind",
                     "in", "out", "kernel", "stride", "pad", "used", "flag");
  for (const LintRow& r : report.rows) {
    std::string kernel = "-", stride = "-", pad = "-", used = "-", flag;
    if (r.geometry && r.consumption) {
      const ConvLayerSpec& g = *r.geometry;
      const Padding& p = r.consumption->provided;
      const Padding& u = r.consumption->used;
      kernel = extent_text(g.kernel);
      stride = extent_text(g.stride);
      pad = fmt::format("{},{},{},{}", p.top, p.bottom, p.left, p.right);
      used = fmt::format("{},{},{},{}", u.top, u.bottom, u.left, u.right);
      if (r.consumption->uneven_vertical) flag += "V";
      if (r.consumption->uneven_horizontal) flag += "H";
      if (!flag.empty()) flag = "* uneven " + flag;
    }
    out << fmt::format("{:<4} {:<20} {:<16} {:>9} {:>9} {:>8} {:>7} {:>9} {:>9}  {}\n", r.index, r.name,
                       to_string(r.kind), extent_text(r.input), extent_text(r.output), kernel, stride, pad,
                       used, flag);
  }
  out << fmt::format("{} of {} layers consume padding unevenly\n", report.flag_count(), report.rows.size());
  return out.str();
}

std::string lint_to_json(const LintReport& report, const std::optional<Extent2>& suggestion,
                         bool suggested, const GenerationInfo& info) {
  json rows = json::array();
  for (const LintRow& r : report.rows) {
    json o = {{"index", r.index},
              {"name", r.name},
              {"kind", to_string(r.kind)},
              {"input", {r.input.h, r.input.w}},
              {"output", {r.output.h, r.output.w}}};
    if (r.consumption) {
      const Padding& p = r.consumption->provided;
      const Padding& u = r.consumption->used;
      o["padding"] = {p.top, p.bottom, p.left, p.right};
      o["used"] = {u.top, u.bottom, u.left, u.right};
      o["uneven_vertical"] = r.consumption->uneven_vertical;
      o["uneven_horizontal"] = r.consumption->uneven_horizontal;
    }
    o["flagged"] = r.flagged();
    rows.push_back(std::move(o));
  }
  json doc = {{"report", "padding_lint"},
              {"generator", info_json(info)},
              {"model", report.model},
              {"input", {report.input.h, report.input.w}},
              {"flagged", report.flag_count()},
              {"layers", std::move(rows)}};
  if (suggested) {
    doc["suggested_input"] = suggestion ? json{suggestion->h, suggestion->w} : json(nullptr);
  }
  return doc.dump(2) + "\n";
}

std::string consistency_to_text(const ConsistencyReport& report,
                                const std::vector<std::string>& image_names) {
  std::ostringstream out;
  for (std::size_t i = 0; i < report.per_image.size(); ++i) {
    const std::string name = i < image_names.size() ? image_names[i] : fmt::format("image{}", i);
    out << fmt::format("{} {:.6f}\n", name, report.per_image[i]);
  }
  if (report.kind == ConsistencyKind::kShift) {
    out << fmt::format("shift {},{}\n", report.shift_dy, report.shift_dx);
  }
  out << fmt::format("images {}\n", report.image_count);
  out << fmt::format("mean {:.6f}\n", report.mean);
  return out.str();
}

std::string consistency_to_json(const ConsistencyReport& report,
                                const std::vector<std::string>& image_names, const GenerationInfo& info) {
  json images = json::array();
  for (std::size_t i = 0; i < report.per_image.size(); ++i) {
    images.push_back({{"name", i < image_names.size() ? image_names[i] : fmt::format("image{}", i)},
                      {"fraction", report.per_image[i]}});
  }
  json doc = {{"report", report.kind == ConsistencyKind::kFlip ? "flip_consistency" : "shift_consistency"},
              {"generator", info_json(info)},
              {"images", std::move(images)},
              {"count", report.image_count},
              {"mean", report.mean}};
  if (report.kind == ConsistencyKind::kShift) doc["shift"] = {report.shift_dy, report.shift_dx};
  return doc.dump(2) + "\n";
}

}  // namespace kernsym
