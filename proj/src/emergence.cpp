// SPDX-License-Identifier: Apache-2.0

#include "kernsym/emergence.hpp"

#include <cmath>
#include <sstream>

#include <fmt/core.h>

#include "kernsym/error.hpp"

namespace kernsym {

namespace {

constexpr double kEdgeNoise = 0.1;

void add_kaiming(TensorStore& store, const std::string& name, Dims4 dims, std::uint64_t seed,
                 bool rank2) {
  const Tensor4 w = kaiming_init(dims, seed);
  std::vector<std::size_t> shape = rank2 ? std::vector<std::size_t>{dims.n, dims.c}
                                         : std::vector<std::size_t>{dims.n, dims.c, dims.h, dims.w};
  store.add_f64(name, std::move(shape), w.data());
}

void add_zeros(TensorStore& store, const std::string& name, std::size_t n) {
  const std::vector<double> zeros(n, 0.0);
  store.add_f64(name, {n}, zeros);
}

LayerSpec conv_layer(std::string name, ConvLayerSpec geometry, std::string weight,
                     std::optional<std::string> bias) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::kConv2d;
  l.conv = geometry;
  l.weight = std::move(weight);
  l.bias = std::move(bias);
  return l;
}

LayerSpec plain_layer(std::string name, LayerKind kind) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = kind;
  return l;
}

bool all_finite(const Network& model) {
  for (const LayerState& s : model.layers()) {
    for (double v : s.weight)
      if (!std::isfinite(v)) return false;
    for (double v : s.bias)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

Tensor4 kaiming_init(Dims4 shape, std::uint64_t seed) {
  const double fan_in = static_cast<double>(shape.c * shape.h * shape.w);
  const double std_dev = std::sqrt(2.0 / fan_in);
  SplitMix64 rng(seed);
  std::vector<double> data(shape.count());
  for (double& v : data) v = std_dev * rng.normal();
  return Tensor4(shape, std::move(data));
}

Dataset gen_blur_task(std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw Error(ErrorCode::kInvalidArgument, "gen_blur_task: n_samples must be >= 1");
  const auto& f = binomial3x3();
  const Tensor4 blur({1, 1, 3, 3}, std::vector<double>(f.begin(), f.end()));
  const ConvLayerSpec spec = ConvLayerSpec::symmetric(3, 1, 1, PaddingMode::kReflect);
  SplitMix64 rng(seed);
  Dataset data;
  data.kind = TargetKind::kRegression;
  for (std::size_t i = 0; i < n_samples; ++i) {
    FeatureMap x(1, kToySide, kToySide);
    for (double& v : x.data) v = rng.normal();
    FeatureMap y = conv2d_forward(x, blur, {}, spec);
    data.samples.push_back({std::move(x), std::move(y), 0});
  }
  return data;
}

FeatureMap edge_exemplar(std::uint64_t sub_seed, EdgeSide side) {
  SplitMix64 rng(sub_seed);
  const std::size_t cut = 1 + static_cast<std::size_t>(rng.below(4));
  FeatureMap x(1, kToySide, kToySide);
  for (std::size_t y = 0; y < kToySide; ++y) {
    for (std::size_t c = 0; c < kToySide; ++c) {
      x.at(0, y, c) = (c >= cut ? 1.0 : 0.0) + kEdgeNoise * rng.normal();
    }
  }
  return side == EdgeSide::kLeft ? x : flip_h(x);
}

Dataset gen_edge_task(std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw Error(ErrorCode::kInvalidArgument, "gen_edge_task: n_samples must be >= 1");
  SplitMix64 rng(seed);
  Dataset data;
  data.kind = TargetKind::kClassification;
  data.flip_toggles_label = true;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const std::uint64_t sub = rng.next();
    const auto side = rng.coin() ? EdgeSide::kRight : EdgeSide::kLeft;
    data.samples.push_back({edge_exemplar(sub, side), FeatureMap(), static_cast<std::size_t>(side)});
  }
  return data;
}

ToyModel blur_toy_model(std::uint64_t seed) {
  ToyModel m;
  m.manifest.model = "blur-toy";
  m.manifest.input = {kToySide, kToySide, 1};
  m.manifest.layers.push_back(conv_layer(
      "conv1", ConvLayerSpec::symmetric(3, 1, 1, PaddingMode::kReflect), "conv1.weight", std::nullopt));
  add_kaiming(m.store, "conv1.weight", {1, 1, 3, 3}, derive_seed(seed, 0), false);
  return m;
}

ToyModel edge_toy_model(std::uint64_t seed) {
  ToyModel m;
  m.manifest.model = "edge-toy";
  m.manifest.input = {kToySide, kToySide, 1};
  auto& layers = m.manifest.layers;
  layers.push_back(conv_layer("conv1", ConvLayerSpec::symmetric(3, 1, 1), "conv1.weight", "conv1.bias"));
  layers.push_back(plain_layer("relu1", LayerKind::kRelu));
  layers.push_back(conv_layer("conv2", ConvLayerSpec::symmetric(3, 2, 1), "conv2.weight", "conv2.bias"));
  layers.push_back(plain_layer("relu2", LayerKind::kRelu));
  layers.push_back(plain_layer("pool", LayerKind::kGlobalAvgPool));
  LayerSpec fc = plain_layer("fc", LayerKind::kDense);
  fc.weight = "fc.weight";
  fc.bias = "fc.bias";
  layers.push_back(fc);

  add_kaiming(m.store, "conv1.weight", {4, 1, 3, 3}, derive_seed(seed, 0), false);
  add_zeros(m.store, "conv1.bias", 4);
  add_kaiming(m.store, "conv2.weight", {4, 4, 3, 3}, derive_seed(seed, 1), false);
  add_zeros(m.store, "conv2.bias", 4);
  add_kaiming(m.store, "fc.weight", {2, 4, 1, 1}, derive_seed(seed, 2), true);
  add_zeros(m.store, "fc.bias", 2);
  return m;
}

std::vector<SymmetryScore> conv_layer_scores(const Network& model) {
  std::vector<SymmetryScore> out;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const LayerState& s = model.layers()[i];
    if (s.spec.kind != LayerKind::kConv2d) continue;
    out.push_back(symmetry_score(mean_kernel(model.weight_tensor(i)), s.spec.name));
  }
  return out;
}

BatchResult batch_gradients(Network& model, const Dataset& data, const std::vector<std::size_t>& indices,
                            const std::vector<bool>& flips, LossKind loss) {
  BatchResult out;
  out.grads.resize(model.layers().size());
  for (std::size_t li = 0; li < model.layers().size(); ++li) {
    out.grads[li].weight.assign(model.layers()[li].weight.size(), 0.0);
    out.grads[li].bias.assign(model.layers()[li].bias.size(), 0.0);
  }
  const auto scale = 1.0 / static_cast<double>(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Sample& s = data.samples.at(indices[b]);
    const bool flip = b < flips.size() && flips[b];
    const FeatureMap out_map = model.forward(flip ? flip_h(s.input) : s.input);
    LossValue lv;
    if (loss == LossKind::kMse) {
      lv = mse_loss(out_map, flip ? flip_h(s.target) : s.target);
    } else {
      const std::size_t label = flip && data.flip_toggles_label ? 1 - s.label : s.label;
      lv = cross_entropy_loss(out_map, label);
    }
    out.loss += scale * lv.loss;
    const Gradients g = model.backward(lv.grad);
    for (std::size_t li = 0; li < g.layers.size(); ++li) {
      for (std::size_t i = 0; i < g.layers[li].weight.size(); ++i) out.grads[li].weight[i] += scale * g.layers[li].weight[i];
      for (std::size_t i = 0; i < g.layers[li].bias.size(); ++i) out.grads[li].bias[i] += scale * g.layers[li].bias[i];
    }
  }
  return out;
}

TrainResult train(Network model, const Dataset& data, const TrainConfig& config) {
  if (!(config.learning_rate >= 0.0) || config.steps == 0 || config.batch_size == 0 ||
      config.trace_interval == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "train: learning rate must be >= 0 and steps, batch size and trace interval >= 1");
  }
  if (data.samples.empty()) throw Error(ErrorCode::kInvalidArgument, "train: empty dataset");
  if ((config.loss == LossKind::kMse) != (data.kind == TargetKind::kRegression)) {
    throw Error(ErrorCode::kInvalidArgument, "train: loss kind does not fit the dataset");
  }

  SplitMix64 rng(config.seed);
  TrainResult result;
  result.trace.interval = config.trace_interval;
  result.trace.samples.push_back({0, conv_layer_scores(model)});

  std::vector<std::size_t> indices(config.batch_size);
  std::vector<bool> flips(config.batch_size);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      indices[b] = static_cast<std::size_t>(rng.below(data.samples.size()));
      flips[b] = config.flip_augment && rng.coin();
    }
    const BatchResult batch = batch_gradients(model, data, indices, flips, config.loss);
    if (!std::isfinite(batch.loss)) {
      throw Error(ErrorCode::kDivergedLoss, fmt::format("train: loss became non-finite at step {}", step));
    }
    result.losses.push_back(batch.loss);
    for (std::size_t li = 0; li < model.layers().size(); ++li) {
      LayerState& s = model.layers()[li];
      for (std::size_t i = 0; i < s.weight.size(); ++i) s.weight[i] -= config.learning_rate * batch.grads[li].weight[i];
      for (std::size_t i = 0; i < s.bias.size(); ++i) s.bias[i] -= config.learning_rate * batch.grads[li].bias[i];
    }
    if (!all_finite(model)) {
      throw Error(ErrorCode::kDivergedLoss, fmt::format("train: parameters became non-finite at step {}", step));
    }
    if (step % config.trace_interval == 0 || step == config.steps) {
      result.trace.samples.push_back({step, conv_layer_scores(model)});
    }
  }
  model.clear_cache();
  result.model = std::move(model);
  return result;
}

std::string trace_to_csv(const SymmetryTrace& trace) {
  std::ostringstream out;
  out << "step,layer_name,score,defined\n";
  for (const TraceSample& s : trace.samples) {
    for (const SymmetryScore& score : s.scores) {
      out << s.step << ',' << score.layer_name << ',';
      if (score.defined) out << fmt::format("{:.17g}", score.value);
      out << ',' << (score.defined ? "true" : "false") << '\n';
    }
  }
  return out.str();
}

}  // namespace kernsym
