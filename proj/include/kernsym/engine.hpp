// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "kernsym/conv_spec.hpp"
#include "kernsym/manifest.hpp"
#include "kernsym/safetensors.hpp"
#include "kernsym/tensor.hpp"

namespace kernsym {

/// (C, H, W) activation grid, row-major.
struct FeatureMap {
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;
  std::vector<double> data;

  FeatureMap() : data(1, 0.0) {}
  FeatureMap(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : c(c), h(h), w(w), data(c * h * w, fill) {}
  FeatureMap(std::size_t c, std::size_t h, std::size_t w, std::vector<double> values);

  double& at(std::size_t ch, std::size_t y, std::size_t x) { return data[(ch * h + y) * w + x]; }
  double at(std::size_t ch, std::size_t y, std::size_t x) const { return data[(ch * h + y) * w + x]; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

/// Mirror across the vertical axis (x -> W-1-x).
FeatureMap flip_h(const FeatureMap& x);

/// out(y, x) = in(y - dy, x - dx); vacated cells are zero.
FeatureMap shift(const FeatureMap& x, int dy, int dx);

/// 1/16 * outer([1,2,1], [1,2,1]).
const std::array<double, 9>& binomial3x3();

/// Cross-correlation (no kernel flip) of `x` with `w` (N, C, kh, kw).
///
/// zero:         out-of-range cells read as 0.
/// reflect:      mirror about the edge cell without repeating it.
/// partial_conv: zero padding, then the window sum (bias excluded) is scaled
///               by kh*kw / (in-range cells under the window).
///
/// `bias` is empty or holds N entries.
FeatureMap conv2d_forward(const FeatureMap& x, const Tensor4& w, std::span<const double> bias,
                          const ConvLayerSpec& spec);

/// kMaxPool uses `spec` (padded cells never win); kBlurPool and
/// kGlobalAvgPool ignore it.
FeatureMap pool_forward(const FeatureMap& x, LayerKind kind, const ConvLayerSpec& spec = {});

/// Trainable state of one layer plus whatever backward needs from forward.
struct LayerState {
  LayerSpec spec;
  /// conv2d: (N, C, kh, kw). dense: (out, in, 1, 1). Empty otherwise.
  Dims4 weight_dims{};
  std::vector<double> weight;
  std::vector<double> bias;
  bool has_bias = false;

  std::optional<FeatureMap> cached_input;
  std::vector<std::size_t> argmax;  // maxpool: flat input index per output cell
};

struct LayerGradient {
  std::vector<double> weight;
  std::vector<double> bias;
};

struct Gradients {
  std::vector<LayerGradient> layers;
  FeatureMap input;
};

/// Linear chain of layers evaluated in manifest order. Not safe to share
/// between threads during forward/backward; copies are independent.
class Network {
 public:
  Network() = default;

  /// Validates bindings, then copies weights out of `store`.
  static Network from_manifest(const ModelManifest& manifest, const TensorStore& store);

  const ModelManifest& manifest() const { return manifest_; }
  std::vector<LayerState>& layers() { return layers_; }
  const std::vector<LayerState>& layers() const { return layers_; }

  /// Forward pass that records intermediates for backward().
  FeatureMap forward(const FeatureMap& x);

  /// Forward pass without touching the cache.
  FeatureMap evaluate(const FeatureMap& x) const;

  /// Reverse-mode gradients of a scalar loss with d(loss)/d(output) =
  /// `output_grad`. Throws Error{kNoForwardCache} without a prior forward().
  Gradients backward(const FeatureMap& output_grad) const;

  void clear_cache();

  /// Weight tensor of layer `index` (conv2d or dense).
  Tensor4 weight_tensor(std::size_t index) const;

  /// Current parameters under their manifest binding names, as F64.
  TensorStore to_store() const;

 private:
  ModelManifest manifest_;
  std::vector<LayerState> layers_;
};

struct LossValue {
  double loss = 0.0;
  FeatureMap grad;
};

/// mean((pred - target)^2) over all elements.
LossValue mse_loss(const FeatureMap& pred, const FeatureMap& target);

/// Softmax cross-entropy over the flattened logits.
LossValue cross_entropy_loss(const FeatureMap& logits, std::size_t label);

}  // namespace kernsym
