// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kernsym/engine.hpp"
#include "kernsym/manifest.hpp"
#include "kernsym/rng.hpp"
#include "kernsym/symmetry.hpp"

namespace kernsym {

/// i.i.d. N(0, 2 / (C*kh*kw)) entries drawn from SplitMix64(seed) through
/// Box-Muller.
Tensor4 kaiming_init(Dims4 shape, std::uint64_t seed);

enum class TargetKind { kRegression, kClassification };
enum class LossKind { kMse, kCrossEntropy };

struct Sample {
  FeatureMap input;
  FeatureMap target;      // regression
  std::size_t label = 0;  // classification
};

struct Dataset {
  TargetKind kind = TargetKind::kRegression;
  /// Classification only: a horizontal flip maps label l to 1 - l.
  bool flip_toggles_label = false;
  std::vector<Sample> samples;
};

inline constexpr std::size_t kToySide = 9;

/// 1x9x9 standard-normal fields; targets are the fields filtered by the 3x3
/// binomial kernel under reflect padding, which makes that kernel the unique
/// MSE optimum of a single reflect-padded 3x3 conv.
Dataset gen_blur_task(std::size_t n_samples, std::uint64_t seed);

enum class EdgeSide { kLeft = 0, kRight = 1 };

/// One 1x9x9 step-edge image. Columns at or beyond a cut drawn from
/// {1, 2, 3, 4} are bright; the right-side exemplar of a sub-seed is the exact
/// mirror of its left-side one.
FeatureMap edge_exemplar(std::uint64_t sub_seed, EdgeSide side);

/// Labels are the edge side, so flipping an image toggles its label.
Dataset gen_edge_task(std::size_t n_samples, std::uint64_t seed);

struct ToyModel {
  ModelManifest manifest;
  TensorStore store;
};

/// Single 3x3 reflect-padded conv without bias.
ToyModel blur_toy_model(std::uint64_t seed);

/// conv 3x3 (1->4) / relu / conv 3x3 stride 2 (4->4) / relu / global average
/// pool / dense (4->2).
ToyModel edge_toy_model(std::uint64_t seed);

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t steps = 1;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  bool flip_augment = false;
  LossKind loss = LossKind::kMse;
  std::size_t trace_interval = 100;
};

struct TraceSample {
  std::size_t step = 0;
  std::vector<SymmetryScore> scores;
};

struct SymmetryTrace {
  std::size_t interval = 0;
  std::vector<TraceSample> samples;
};

struct TrainResult {
  Network model;
  SymmetryTrace trace;
  std::vector<double> losses;  // mean batch loss per step
};

/// Symmetry of every conv2d layer's mean kernel in `model`.
std::vector<SymmetryScore> conv_layer_scores(const Network& model);

/// Mean loss and parameter gradients over a batch; flips are applied
/// label-aware before the forward pass.
struct BatchResult {
  double loss = 0.0;
  std::vector<LayerGradient> grads;
};
BatchResult batch_gradients(Network& model, const Dataset& data, const std::vector<std::size_t>& indices,
                            const std::vector<bool>& flips, LossKind loss);

/// Plain SGD. The trace is sampled before the first step, every
/// `trace_interval` steps, and after the last step. Deterministic in
/// `config.seed`. Throws Error{kDivergedLoss} naming the step when the loss
/// or parameters stop being finite.
TrainResult train(Network model, const Dataset& data, const TrainConfig& config);

/// CSV with header `step,layer_name,score,defined`; undefined scores leave
/// the score field empty.
std::string trace_to_csv(const SymmetryTrace& trace);

}  // namespace kernsym
