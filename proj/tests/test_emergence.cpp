// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "kernsym/emergence.hpp"
#include "oracles/oracles.hpp"
#include "support/expect_error.hpp"
#include "support/fixtures.hpp"

using namespace kernsym;

TEST(Emergence, KaimingInitStatistics) {
  const Tensor4 w = kaiming_init({64, 8, 3, 3}, 4);
  double sum = 0.0, sq = 0.0;
  for (double v : w.data()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(w.data().size());
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(std::sqrt(sq / n), std::sqrt(2.0 / 72.0), 0.01);
  EXPECT_TRUE(std::ranges::equal(kaiming_init({2, 1, 3, 3}, 9).data(), kaiming_init({2, 1, 3, 3}, 9).data()));
  EXPECT_FALSE(std::ranges::equal(kaiming_init({2, 1, 3, 3}, 9).data(), kaiming_init({2, 1, 3, 3}, 10).data()));
}

TEST(Emergence, BlurTargetsAreBinomialBlur) {
  const Dataset d = gen_blur_task(5, 3);
  ASSERT_EQ(d.samples.size(), 5u);
  EXPECT_EQ(d.kind, TargetKind::kRegression);
  const auto& b = binomial3x3();
  const std::vector<double> w(b.begin(), b.end());
  for (const Sample& s : d.samples) {
    const FeatureMap expect = oracle::conv2d(s.input, 1, w, {}, ConvLayerSpec::symmetric(3, 1, 1, PaddingMode::kReflect));
    for (std::size_t i = 0; i < expect.data.size(); ++i) EXPECT_NEAR(s.target.data[i], expect.data[i], 1e-12);
  }
}

TEST(Emergence, EdgeTaskPairsAreMirrorImages) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FeatureMap l = edge_exemplar(seed, EdgeSide::kLeft);
    EXPECT_EQ(edge_exemplar(seed, EdgeSide::kRight), flip_h(l));
    // bright columns sit to the right of the cut
    EXPECT_GT(l.at(0, 4, 8), 0.5);
    EXPECT_LT(l.at(0, 4, 0), 0.5);
  }
  const Dataset d = gen_edge_task(200, 1);
  EXPECT_TRUE(d.flip_toggles_label);
  std::size_t right = 0;
  for (const Sample& s : d.samples) right += s.label;
  EXPECT_GT(right, 60u);
  EXPECT_LT(right, 140u);
}

TEST(Emergence, ToyModelsValidate) {
  const ToyModel blur = blur_toy_model(1);
  EXPECT_NO_THROW(Network::from_manifest(blur.manifest, blur.store));
  const ToyModel edge = edge_toy_model(1);
  const Network net = Network::from_manifest(edge.manifest, edge.store);
  EXPECT_EQ(net.evaluate(edge_exemplar(0, EdgeSide::kLeft)).c, 2u);
  EXPECT_EQ(conv_layer_scores(net).size(), 2u);
}

TEST(Emergence, BatchGradientIsMeanOfSamples) {
  const ToyModel toy = blur_toy_model(2);
  Network net = Network::from_manifest(toy.manifest, toy.store);
  const Dataset d = gen_blur_task(4, 2);
  const BatchResult both = batch_gradients(net, d, {0, 1}, {false, true}, LossKind::kMse);
  const BatchResult a = batch_gradients(net, d, {0}, {false}, LossKind::kMse);
  const BatchResult b = batch_gradients(net, d, {1}, {true}, LossKind::kMse);
  EXPECT_NEAR(both.loss, 0.5 * (a.loss + b.loss), 1e-14);
  for (std::size_t i = 0; i < 9; ++i)
    EXPECT_NEAR(both.grads[0].weight[i], 0.5 * (a.grads[0].weight[i] + b.grads[0].weight[i]), 1e-14);
}

TEST(Emergence, FlippedEdgeSampleTogglesLabel) {
  const ToyModel toy = edge_toy_model(3);
  Network net = Network::from_manifest(toy.manifest, toy.store);
  Dataset d;
  d.kind = TargetKind::kClassification;
  d.flip_toggles_label = true;
  d.samples.push_back({edge_exemplar(5, EdgeSide::kLeft), {}, 0});
  Dataset mirrored = d;
  mirrored.samples[0] = {edge_exemplar(5, EdgeSide::kRight), {}, 1};
  const BatchResult flipped = batch_gradients(net, d, {0}, {true}, LossKind::kCrossEntropy);
  const BatchResult direct = batch_gradients(net, mirrored, {0}, {false}, LossKind::kCrossEntropy);
  EXPECT_DOUBLE_EQ(flipped.loss, direct.loss);
}

TEST(Emergence, TrainingIsDeterministicAndTraced) {
  const ToyModel toy = blur_toy_model(7);
  const Dataset d = gen_blur_task(32, 7);
  TrainConfig c;
  c.steps = 250;
  c.trace_interval = 100;
  c.seed = 3;
  const TrainResult a = train(Network::from_manifest(toy.manifest, toy.store), d, c);
  const TrainResult b = train(Network::from_manifest(toy.manifest, toy.store), d, c);
  EXPECT_EQ(trace_to_csv(a.trace), trace_to_csv(b.trace));
  EXPECT_EQ(a.losses, b.losses);
  ASSERT_EQ(a.trace.samples.size(), 4u);
  EXPECT_EQ(a.trace.samples[1].step, 100u);
  EXPECT_EQ(a.trace.samples.back().step, 250u);
  EXPECT_EQ(a.losses.size(), 250u);
  EXPECT_LT(a.losses.back(), a.losses.front());
}

TEST(Emergence, ZeroLearningRateKeepsWeights) {
  const ToyModel toy = edge_toy_model(4);
  TrainConfig c;
  c.learning_rate = 0.0;
  c.steps = 5;
  c.loss = LossKind::kCrossEntropy;
  c.flip_augment = true;
  const TrainResult r = train(Network::from_manifest(toy.manifest, toy.store), gen_edge_task(16, 1), c);
  EXPECT_EQ(r.model.to_store().find("conv2.weight")->to_doubles(), toy.store.find("conv2.weight")->to_doubles());
}

TEST(Emergence, TrainRejectsBadConfigs) {
  const ToyModel toy = blur_toy_model(4);
  const Network net = Network::from_manifest(toy.manifest, toy.store);
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_EQ(code_of([&] { train(net, gen_blur_task(4, 1), c); }), ErrorCode::kInvalidArgument);
  c = {};
  c.loss = LossKind::kCrossEntropy;
  EXPECT_EQ(code_of([&] { train(net, gen_blur_task(4, 1), c); }), ErrorCode::kInvalidArgument);
  c = {};
  c.learning_rate = 1e6;
  c.steps = 50;
  EXPECT_EQ(code_of([&] { train(net, gen_blur_task(4, 1), c); }), ErrorCode::kDivergedLoss);
}

TEST(Emergence, BlurKernelConvergesToBinomial) {
  const ToyModel toy = blur_toy_model(0);
  TrainConfig c;
  c.steps = 1000;
  c.seed = 1;
  const TrainResult r = train(Network::from_manifest(toy.manifest, toy.store), gen_blur_task(64, 0), c);
  const auto w = r.model.layers()[0].weight;
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(w[i], binomial3x3()[i], 1e-2);
  EXPECT_GT(r.trace.samples.back().scores[0].value, r.trace.samples.front().scores[0].value);
}

TEST(Emergence, TraceCsvFormat) {
  SymmetryTrace t;
  t.interval = 10;
  SymmetryScore defined;
  defined.value = 0.5;
  defined.defined = true;
  defined.layer_name = "conv1";
  SymmetryScore undefined;
  undefined.layer_name = "conv2";
  t.samples.push_back({0, {defined, undefined}});
  EXPECT_EQ(trace_to_csv(t), "step,layer_name,score,defined\n0,conv1,0.5,true\n0,conv2,,false\n");
}
