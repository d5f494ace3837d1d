// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kernsym/conv_spec.hpp"
#include "kernsym/safetensors.hpp"

namespace kernsym {

enum class LayerKind { kConv2d, kMaxPool, kBlurPool, kRelu, kGlobalAvgPool, kDense };

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view text);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kRelu;
  /// Window geometry; meaningful for conv2d and maxpool. Blur pooling always
  /// uses blurpool_geometry().
  ConvLayerSpec conv{};
  std::string weight;
  std::optional<std::string> bias;

  bool has_window() const {
    return kind == LayerKind::kConv2d || kind == LayerKind::kMaxPool || kind == LayerKind::kBlurPool;
  }
  /// Geometry used by window arithmetic, including the fixed blur-pool one.
  ConvLayerSpec geometry() const;
};

/// 3x3 binomial filter, reflect padding 1 on every side, stride 2.
ConvLayerSpec blurpool_geometry();

struct InputSpec {
  std::size_t h = 1;
  std::size_t w = 1;
  std::size_t c = 1;
};

struct ModelManifest {
  std::string model;
  InputSpec input;
  std::vector<LayerSpec> layers;
};

/// Parses the JSON manifest:
///
///   {"model": str, "input": {"h": int, "w": int, "c": int},
///    "layers": [{"name": str, "kind": str, "kernel": [kh, kw]?,
///                "stride": [sh, sw]?, "padding": [t, b, l, r]?,
///                "padding_mode": "zero"|"reflect"|"partial_conv"?,
///                "weight": str?, "bias": str?}]}
///
/// Throws Error{kSchemaError} naming the layer index and field.
ModelManifest parse_manifest(std::string_view text);

/// parse_manifest followed by validate_bindings.
ModelManifest parse_manifest(std::string_view text, const TensorStore& store);

ModelManifest load_manifest(const std::filesystem::path& path);

std::string manifest_to_json(const ModelManifest& manifest);

/// Checks every binding against `store` and threads channel and spatial
/// extents through the layer chain.
///
/// Throws Error{kBindingError} for absent tensors and tensors of the wrong
/// rank; Error{kSchemaError} (naming layer index and field) when the bound
/// shapes contradict the declared geometry or the channel chain.
void validate_bindings(const ModelManifest& manifest, const TensorStore& store);

}  // namespace kernsym
