// SPDX-License-Identifier: Apache-2.0

#include "kernsym/conv_arith.hpp"

#include <algorithm>

#include <fmt/core.h>

#include "kernsym/error.hpp"

namespace kernsym {

namespace {

enum class Axis { kVertical, kHorizontal };

struct AxisGeometry {
  std::size_t k, s, p_lo, p_hi;
};

AxisGeometry axis_of(const ConvLayerSpec& spec, Axis axis) {
  if (axis == Axis::kVertical) {
    return {spec.kernel.h, spec.stride.h, spec.padding.top, spec.padding.bottom};
  }
  return {spec.kernel.w, spec.stride.w, spec.padding.left, spec.padding.right};
}

bool covered(std::size_t coord, std::size_t windows, std::size_t k, std::size_t s) {
  // The last window starting at or before `coord` is the only candidate.
  const std::size_t q = std::min(windows - 1, coord / s);
  return coord - q * s < k;
}

// True when every windowed layer consumes padding evenly along `axis` for an
// input extent `n`; false also when the chain underflows.
bool axis_is_even(const ModelManifest& manifest, std::size_t n, Axis axis) {
  for (const LayerSpec& layer : manifest.layers) {
    if (layer.kind == LayerKind::kGlobalAvgPool || layer.kind == LayerKind::kDense) {
      n = 1;
      continue;
    }
    if (!layer.has_window()) continue;
    const AxisGeometry g = axis_of(layer.geometry(), axis);
    if (n + g.p_lo + g.p_hi < g.k) return false;
    const AxisConsumption used = padding_consumption(n, g.k, g.s, g.p_lo, g.p_hi);
    if (used.used_lo != used.used_hi) return false;
    n = output_size(n, g.k, g.s, g.p_lo, g.p_hi);
  }
  return true;
}

std::optional<std::size_t> first_even(const ModelManifest& manifest, std::size_t base,
                                      std::size_t limit, Axis axis) {
  for (std::size_t n = base; n <= base + limit; ++n) {
    if (axis_is_even(manifest, n, axis)) return n;
  }
  return std::nullopt;
}

}  // namespace

std::size_t output_size(std::size_t n, std::size_t k, std::size_t s, std::size_t p_lo,
                        std::size_t p_hi) {
  if (k == 0 || s == 0) {
    throw Error(ErrorCode::kInvalidSpec, "output_size: kernel and stride must be positive");
  }
  const std::size_t padded = n + p_lo + p_hi;
  if (padded < k) {
    throw Error(ErrorCode::kWindowTooLarge,
                fmt::format("window of {} does not fit padded extent {} (n={}, pad {}+{})", k,
                            padded, n, p_lo, p_hi));
  }
  return (padded - k) / s + 1;
}

AxisConsumption padding_consumption(std::size_t n, std::size_t k, std::size_t s, std::size_t p_lo,
                                    std::size_t p_hi) {
  const std::size_t windows = output_size(n, k, s, p_lo, p_hi);
  AxisConsumption used;
  for (std::size_t c = 0; c < p_lo; ++c) {
    if (covered(c, windows, k, s)) ++used.used_lo;
  }
  for (std::size_t c = p_lo + n; c < p_lo + n + p_hi; ++c) {
    if (covered(c, windows, k, s)) ++used.used_hi;
  }
  return used;
}

PaddingConsumption is_uneven(const ConvLayerSpec& spec, Extent2 input) {
  spec.validate();
  const AxisGeometry v = axis_of(spec, Axis::kVertical);
  const AxisGeometry h = axis_of(spec, Axis::kHorizontal);
  const AxisConsumption vu = padding_consumption(input.h, v.k, v.s, v.p_lo, v.p_hi);
  const AxisConsumption hu = padding_consumption(input.w, h.k, h.s, h.p_lo, h.p_hi);

  PaddingConsumption out;
  out.provided = spec.padding;
  out.used = {vu.used_lo, vu.used_hi, hu.used_lo, hu.used_hi};
  out.output = {output_size(input.h, v.k, v.s, v.p_lo, v.p_hi),
                output_size(input.w, h.k, h.s, h.p_lo, h.p_hi)};
  out.uneven_vertical = vu.used_lo != vu.used_hi;
  out.uneven_horizontal = hu.used_lo != hu.used_hi;
  return out;
}

Extent2 layer_output_extent(const LayerSpec& layer, Extent2 input, std::size_t index) {
  switch (layer.kind) {
    case LayerKind::kGlobalAvgPool:
    case LayerKind::kDense:
      return {1, 1};
    case LayerKind::kRelu:
      return input;
    default:
      break;
  }
  const ConvLayerSpec g = layer.geometry();
  try {
    return {output_size(input.h, g.kernel.h, g.stride.h, g.padding.top, g.padding.bottom),
            output_size(input.w, g.kernel.w, g.stride.w, g.padding.left, g.padding.right)};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kWindowTooLarge) throw;
    throw Error(ErrorCode::kShapeUnderflow,
                fmt::format("layer {} ('{}'): input {}x{} too small: {}", index, layer.name, input.h,
                            input.w, e.what()));
  }
}

std::size_t LintReport::flag_count() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const LintRow& r) { return r.flagged(); }));
}

LintReport propagate_and_lint(const ModelManifest& manifest, Extent2 input) {
  LintReport report;
  report.model = manifest.model;
  report.input = input;
  Extent2 extent = input;
  for (std::size_t i = 0; i < manifest.layers.size(); ++i) {
    const LayerSpec& layer = manifest.layers[i];
    LintRow row;
    row.index = i;
    row.name = layer.name;
    row.kind = layer.kind;
    row.input = extent;
    row.output = layer_output_extent(layer, extent, i);
    if (layer.has_window()) {
      row.geometry = layer.geometry();
      row.consumption = is_uneven(*row.geometry, extent);
    }
    extent = row.output;
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::optional<Extent2> suggest_input_size(const ModelManifest& manifest, Extent2 base,
                                          std::size_t search_limit) {
  const auto h = first_even(manifest, base.h, search_limit, Axis::kVertical);
  const auto w = first_even(manifest, base.w, search_limit, Axis::kHorizontal);
  if (!h || !w) return std::nullopt;
  return Extent2{*h, *w};
}

}  // namespace kernsym
