// SPDX-License-Identifier: Apache-2.0

#include "kernsym/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "kernsym/conv_arith.hpp"
#include "kernsym/error.hpp"

namespace kernsym {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void schema_error(std::size_t index, const std::string& layer, std::string_view field,
                               const std::string& msg) {
  throw Error(ErrorCode::kSchemaError,
              fmt::format("layer {} ('{}'): field '{}': {}", index, layer, field, msg));
}

[[noreturn]] void top_error(std::string_view field, const std::string& msg) {
  throw Error(ErrorCode::kSchemaError, fmt::format("manifest: field '{}': {}", field, msg));
}

std::vector<std::size_t> read_uint_array(const json& layer, std::size_t index, const std::string& name,
                                         const char* field, std::size_t length, bool positive) {
  const json& arr = layer.at(field);
  if (!arr.is_array() || arr.size() != length) {
    schema_error(index, name, field, fmt::format("expected an array of {} integers", length));
  }
  std::vector<std::size_t> out;
  for (const auto& v : arr) {
    if (!v.is_number_unsigned() || (positive && v.get<std::size_t>() == 0)) {
      schema_error(index, name, field,
                   positive ? "entries must be positive integers" : "entries must be non-negative integers");
    }
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

std::size_t read_positive(const json& obj, const char* field) {
  const auto it = obj.find(field);
  if (it == obj.end() || !it->is_number_unsigned() || it->get<std::size_t>() == 0) {
    top_error(std::string("input.") + field, "expected a positive integer");
  }
  return it->get<std::size_t>();
}

std::optional<PaddingMode> parse_mode(std::string_view text) {
  if (text == "zero") return PaddingMode::kZero;
  if (text == "reflect") return PaddingMode::kReflect;
  if (text == "partial_conv") return PaddingMode::kPartialConv;
  return std::nullopt;
}

LayerSpec parse_layer(const json& obj, std::size_t index) {
  if (!obj.is_object()) schema_error(index, "?", "layer", "expected an object");
  LayerSpec layer;
  const auto name_it = obj.find("name");
  if (name_it == obj.end() || !name_it->is_string() || name_it->get<std::string>().empty()) {
    schema_error(index, "?", "name", "expected a non-empty string");
  }
  layer.name = name_it->get<std::string>();
  const std::string& name = layer.name;

  const auto kind_it = obj.find("kind");
  if (kind_it == obj.end() || !kind_it->is_string()) schema_error(index, name, "kind", "expected a string");
  const auto kind = parse_layer_kind(kind_it->get<std::string>());
  if (!kind) schema_error(index, name, "kind", fmt::format("unknown kind '{}'", kind_it->get<std::string>()));
  layer.kind = *kind;

  const bool windowed = layer.kind == LayerKind::kConv2d || layer.kind == LayerKind::kMaxPool;
  for (const char* field : {"kernel", "stride", "padding", "padding_mode"}) {
    if (obj.contains(field) && !windowed) {
      schema_error(index, name, field, fmt::format("not allowed for kind {}", to_string(layer.kind)));
    }
  }
  if (windowed) {
    if (!obj.contains("kernel")) schema_error(index, name, "kernel", "required");
    const auto k = read_uint_array(obj, index, name, "kernel", 2, true);
    layer.conv.kernel = {k[0], k[1]};
    if (obj.contains("stride")) {
      const auto s = read_uint_array(obj, index, name, "stride", 2, true);
      layer.conv.stride = {s[0], s[1]};
    }
    if (obj.contains("padding")) {
      const auto p = read_uint_array(obj, index, name, "padding", 4, false);
      layer.conv.padding = {p[0], p[1], p[2], p[3]};
    }
    if (obj.contains("padding_mode")) {
      const json& m = obj.at("padding_mode");
      const auto mode = m.is_string() ? parse_mode(m.get<std::string>()) : std::nullopt;
      if (!mode) schema_error(index, name, "padding_mode", "expected zero, reflect or partial_conv");
      if (layer.kind == LayerKind::kMaxPool && *mode != PaddingMode::kZero) {
        schema_error(index, name, "padding_mode", "maxpool only supports zero (ignored) padding");
      }
      layer.conv.mode = *mode;
    }
    try {
      layer.conv.validate();
    } catch (const Error& e) {
      schema_error(index, name, "padding", e.what());
    }
    if (layer.kind == LayerKind::kMaxPool) {
      const Padding& p = layer.conv.padding;
      if (p.top >= layer.conv.kernel.h || p.bottom >= layer.conv.kernel.h ||
          p.left >= layer.conv.kernel.w || p.right >= layer.conv.kernel.w) {
        schema_error(index, name, "padding", "maxpool padding must be smaller than the window");
      }
    }
  }

  const bool weighted = layer.kind == LayerKind::kConv2d || layer.kind == LayerKind::kDense;
  for (const char* field : {"weight", "bias"}) {
    if (!obj.contains(field)) continue;
    if (!weighted) schema_error(index, name, field, fmt::format("not allowed for kind {}", to_string(layer.kind)));
    if (!obj.at(field).is_string()) schema_error(index, name, field, "expected a string");
  }
  if (weighted) {
    if (!obj.contains("weight")) schema_error(index, name, "weight", "required");
    layer.weight = obj.at("weight").get<std::string>();
    if (obj.contains("bias")) layer.bias = obj.at("bias").get<std::string>();
  }
  return layer;
}

const StoredTensor& bound(const TensorStore& store, std::size_t index, const LayerSpec& layer,
                          const std::string& binding, std::size_t rank) {
  const StoredTensor* t = store.find(binding);
  if (t == nullptr) {
    throw Error(ErrorCode::kBindingError,
                fmt::format("layer {} ('{}'): tensor '{}' not found in weight store", index,
                            layer.name, binding));
  }
  if (t->shape.size() != rank) {
    throw Error(ErrorCode::kBindingError,
                fmt::format("layer {} ('{}'): tensor '{}' has rank {}, expected {}", index,
                            layer.name, binding, t->shape.size(), rank));
  }
  return *t;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kBlurPool: return "blurpool";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kGlobalAvgPool: return "global_avg_pool";
    case LayerKind::kDense: return "dense";
  }
  return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view text) {
  for (LayerKind k : {LayerKind::kConv2d, LayerKind::kMaxPool, LayerKind::kBlurPool, LayerKind::kRelu,
                      LayerKind::kGlobalAvgPool, LayerKind::kDense}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

ConvLayerSpec blurpool_geometry() { return ConvLayerSpec::symmetric(3, 2, 1, PaddingMode::kReflect); }

ConvLayerSpec LayerSpec::geometry() const {
  return kind == LayerKind::kBlurPool ? blurpool_geometry() : conv;
}

ModelManifest parse_manifest(std::string_view text) {
  const json doc = json::parse(text.begin(), text.end(), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kSchemaError, "manifest: invalid JSON");
  if (!doc.is_object()) top_error("<root>", "expected an object");

  ModelManifest m;
  const auto model_it = doc.find("model");
  if (model_it == doc.end() || !model_it->is_string()) top_error("model", "expected a string");
  m.model = model_it->get<std::string>();

  const auto input_it = doc.find("input");
  if (input_it == doc.end() || !input_it->is_object()) top_error("input", "expected an object");
  m.input = {read_positive(*input_it, "h"), read_positive(*input_it, "w"), read_positive(*input_it, "c")};

  const auto layers_it = doc.find("layers");
  if (layers_it == doc.end() || !layers_it->is_array()) top_error("layers", "expected an array");
  std::set<std::string> names;
  for (std::size_t i = 0; i < layers_it->size(); ++i) {
    LayerSpec layer = parse_layer((*layers_it)[i], i);
    if (!names.insert(layer.name).second) schema_error(i, layer.name, "name", "duplicate layer name");
    m.layers.push_back(std::move(layer));
  }
  return m;
}

ModelManifest parse_manifest(std::string_view text, const TensorStore& store) {
  ModelManifest m = parse_manifest(text);
  validate_bindings(m, store);
  return m;
}

ModelManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot open '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_manifest(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string manifest_to_json(const ModelManifest& manifest) {
  json doc = json::object();
  doc["model"] = manifest.model;
  doc["input"] = {{"h", manifest.input.h}, {"w", manifest.input.w}, {"c", manifest.input.c}};
  json layers = json::array();
  for (const auto& l : manifest.layers) {
    json o = json::object();
    o["name"] = l.name;
    o["kind"] = to_string(l.kind);
    if (l.kind == LayerKind::kConv2d || l.kind == LayerKind::kMaxPool) {
      const ConvLayerSpec& c = l.conv;
      o["kernel"] = {c.kernel.h, c.kernel.w};
      o["stride"] = {c.stride.h, c.stride.w};
      o["padding"] = {c.padding.top, c.padding.bottom, c.padding.left, c.padding.right};
      o["padding_mode"] = to_string(c.mode);
    }
    if (!l.weight.empty()) o["weight"] = l.weight;
    if (l.bias) o["bias"] = *l.bias;
    layers.push_back(std::move(o));
  }
  doc["layers"] = std::move(layers);
  return doc.dump(2);
}

void validate_bindings(const ModelManifest& manifest, const TensorStore& store) {
  std::size_t channels = manifest.input.c;
  Extent2 extent{manifest.input.h, manifest.input.w};
  for (std::size_t i = 0; i < manifest.layers.size(); ++i) {
    const LayerSpec& layer = manifest.layers[i];
    switch (layer.kind) {
      case LayerKind::kConv2d: {
        const StoredTensor& w = bound(store, i, layer, layer.weight, 4);
        if (w.shape[1] != channels) {
          schema_error(i, layer.name, "weight",
                       fmt::format("tensor '{}' expects {} input channels but the previous layer yields {}",
                                   layer.weight, w.shape[1], channels));
        }
        if (w.shape[2] != layer.conv.kernel.h || w.shape[3] != layer.conv.kernel.w) {
          schema_error(i, layer.name, "kernel",
                       fmt::format("declared {}x{} but tensor '{}' is {}x{}", layer.conv.kernel.h,
                                   layer.conv.kernel.w, layer.weight, w.shape[2], w.shape[3]));
        }
        if (w.shape[0] == 0) schema_error(i, layer.name, "weight", "tensor has no output channels");
        channels = w.shape[0];
        if (layer.bias) {
          const StoredTensor& b = bound(store, i, layer, *layer.bias, 1);
          if (b.shape[0] != channels) {
            schema_error(i, layer.name, "bias",
                         fmt::format("tensor '{}' has {} entries for {} output channels", *layer.bias,
                                     b.shape[0], channels));
          }
        }
        extent = layer_output_extent(layer, extent, i);
        break;
      }
      case LayerKind::kDense: {
        const StoredTensor& w = bound(store, i, layer, layer.weight, 2);
        const std::size_t in_features = channels * extent.h * extent.w;
        if (w.shape[1] != in_features) {
          schema_error(i, layer.name, "weight",
                       fmt::format("tensor '{}' expects {} input features but the previous layer yields {}",
                                   layer.weight, w.shape[1], in_features));
        }
        if (w.shape[0] == 0) schema_error(i, layer.name, "weight", "tensor has no outputs");
        channels = w.shape[0];
        if (layer.bias) {
          const StoredTensor& b = bound(store, i, layer, *layer.bias, 1);
          if (b.shape[0] != channels) {
            schema_error(i, layer.name, "bias",
                         fmt::format("tensor '{}' has {} entries for {} outputs", *layer.bias,
                                     b.shape[0], channels));
          }
        }
        extent = {1, 1};
        break;
      }
      default:
        extent = layer_output_extent(layer, extent, i);
        break;
    }
  }
}

}  // namespace kernsym
