// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "kernsym/conv_spec.hpp"
#include "kernsym/manifest.hpp"

namespace kernsym {

/// floor((n + p_lo + p_hi - k) / s) + 1. Throws Error{kWindowTooLarge} when
/// the kernel does not fit in the padded extent.
std::size_t output_size(std::size_t n, std::size_t k, std::size_t s, std::size_t p_lo,
                        std::size_t p_hi);

struct AxisConsumption {
  std::size_t used_lo = 0;
  std::size_t used_hi = 0;
  friend bool operator==(const AxisConsumption&, const AxisConsumption&) = default;
};

/// Number of padded cells on each side of one axis that at least one window
/// covers. Windows start at padded coordinate 0 and step by s.
AxisConsumption padding_consumption(std::size_t n, std::size_t k, std::size_t s, std::size_t p_lo,
                                    std::size_t p_hi);

struct PaddingConsumption {
  Padding used;
  Padding provided;
  Extent2 output;
  bool uneven_vertical = false;
  bool uneven_horizontal = false;

  bool uneven() const { return uneven_vertical || uneven_horizontal; }
};

PaddingConsumption is_uneven(const ConvLayerSpec& spec, Extent2 input);

/// Spatial extent after `layer`. Dense and global pooling collapse to 1x1.
/// Throws Error{kShapeUnderflow} naming the layer when a window no longer fits.
Extent2 layer_output_extent(const LayerSpec& layer, Extent2 input, std::size_t index);

struct LintRow {
  std::size_t index = 0;
  std::string name;
  LayerKind kind = LayerKind::kRelu;
  Extent2 input;
  Extent2 output;
  std::optional<ConvLayerSpec> geometry;
  std::optional<PaddingConsumption> consumption;

  bool flagged() const { return consumption && consumption->uneven(); }
};

struct LintReport {
  std::string model;
  Extent2 input;
  std::vector<LintRow> rows;

  std::size_t flag_count() const;
};

/// Threads `input` through every layer, recording window placement for conv
/// and pooling layers.
LintReport propagate_and_lint(const ModelManifest& manifest, Extent2 input);

/// Smallest size >= base, searched per axis up to base + search_limit, at
/// which no layer consumes padding unevenly. std::nullopt when either axis
/// has no such size in the window.
std::optional<Extent2> suggest_input_size(const ModelManifest& manifest, Extent2 base,
                                          std::size_t search_limit = 16);

}  // namespace kernsym
