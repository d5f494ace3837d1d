// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "kernsym/manifest.hpp"
#include "support/expect_error.hpp"
#include "support/fixtures.hpp"

using namespace kernsym;

namespace {

constexpr const char* kManifest = R"({
  "model": "tiny",
  "input": {"h": 9, "w": 9, "c": 1},
  "layers": [
    {"name": "conv1", "kind": "conv2d", "kernel": [3, 3], "stride": [2, 2], "padding": [1, 1, 1, 1],
     "padding_mode": "reflect", "weight": "conv1.weight", "bias": "conv1.bias"},
    {"name": "relu1", "kind": "relu"},
    {"name": "pool", "kind": "maxpool", "kernel": [2, 2], "stride": [1, 1]},
    {"name": "blur", "kind": "blurpool"},
    {"name": "gap", "kind": "global_avg_pool"},
    {"name": "fc", "kind": "dense", "weight": "fc.weight"}
  ]
})";

std::string with_layer(const std::string& layer) {
  return R"({"model":"m","input":{"h":8,"w":8,"c":1},"layers":[)" + layer + "]}";
}

std::string schema_message(const std::string& text) {
  try {
    parse_manifest(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaError);
    return e.what();
  }
  ADD_FAILURE() << "parsed: " << text;
  return {};
}

TensorStore tiny_store() {
  TensorStore s;
  s.add_f64("conv1.weight", {2, 1, 3, 3}, std::vector<double>(18, 0.1));
  s.add_f64("conv1.bias", {2}, std::vector<double>(2, 0.0));
  s.add_f64("fc.weight", {3, 2}, std::vector<double>(6, 0.5));
  return s;
}

}  // namespace

TEST(Manifest, ParsesAllKinds) {
  const ModelManifest m = parse_manifest(kManifest);
  EXPECT_EQ(m.model, "tiny");
  EXPECT_EQ(m.input.h, 9u);
  ASSERT_EQ(m.layers.size(), 6u);
  EXPECT_EQ(m.layers[0].conv, ConvLayerSpec::symmetric(3, 2, 1, PaddingMode::kReflect));
  EXPECT_EQ(m.layers[0].bias, "conv1.bias");
  EXPECT_EQ(m.layers[2].kind, LayerKind::kMaxPool);
  EXPECT_EQ(m.layers[2].conv.padding, Padding{});
  EXPECT_EQ(m.layers[3].geometry(), blurpool_geometry());
  EXPECT_EQ(m.layers[5].kind, LayerKind::kDense);
  EXPECT_FALSE(m.layers[5].bias);
}

TEST(Manifest, RoundTripsThroughJson) {
  const ModelManifest m = parse_manifest(kManifest);
  const ModelManifest again = parse_manifest(manifest_to_json(m));
  ASSERT_EQ(again.layers.size(), m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    EXPECT_EQ(again.layers[i].name, m.layers[i].name);
    EXPECT_EQ(again.layers[i].geometry(), m.layers[i].geometry());
    EXPECT_EQ(again.layers[i].weight, m.layers[i].weight);
  }
}

TEST(Manifest, SchemaErrorsNameTheField) {
  EXPECT_NE(schema_message("{").find("invalid JSON"), std::string::npos);
  EXPECT_NE(schema_message(R"({"model":"m","layers":[]})").find("input"), std::string::npos);
  EXPECT_NE(schema_message(with_layer(R"({"name":"a","kind":"warp"})")).find("kind"), std::string::npos);
  EXPECT_NE(schema_message(with_layer(R"({"name":"a","kind":"conv2d","weight":"w"})")).find("kernel"),
            std::string::npos);
  EXPECT_NE(schema_message(with_layer(R"({"name":"a","kind":"relu","kernel":[3,3]})")).find("kernel"),
            std::string::npos);
  EXPECT_NE(schema_message(with_layer(R"({"name":"a","kind":"conv2d","kernel":[3,3]})")).find("weight"),
            std::string::npos);
  EXPECT_NE(schema_message(with_layer(R"({"name":"a","kind":"conv2d","kernel":[3,3],"stride":[0,1],"weight":"w"})"))
                .find("stride"),
            std::string::npos);
  EXPECT_NE(schema_message(with_layer(R"({"name":"a","kind":"conv2d","kernel":[3,3],"padding":[3,3,3,3],"padding_mode":"reflect","weight":"w"})"))
                .find("padding"),
            std::string::npos);
  EXPECT_NE(schema_message(with_layer(R"({"name":"p","kind":"maxpool","kernel":[2,2],"padding":[2,2,2,2]})"))
                .find("padding"),
            std::string::npos);
  EXPECT_NE(schema_message(with_layer(R"({"name":"p","kind":"maxpool","kernel":[2,2],"padding_mode":"reflect"})"))
                .find("padding_mode"),
            std::string::npos);
  EXPECT_NE(schema_message(with_layer(R"({"name":"a","kind":"relu"},{"name":"a","kind":"relu"})")).find("duplicate"),
            std::string::npos);
  EXPECT_NE(schema_message(with_layer(R"({"name":"r","kind":"relu","weight":"w"})")).find("weight"),
            std::string::npos);
}

TEST(Manifest, ValidatesBindings) {
  const ModelManifest m = parse_manifest(kManifest);
  EXPECT_NO_THROW(validate_bindings(m, tiny_store()));
  EXPECT_NO_THROW(parse_manifest(kManifest, tiny_store()));

  TensorStore missing;
  missing.add_f64("conv1.weight", {2, 1, 3, 3}, std::vector<double>(18, 0.1));
  EXPECT_EQ(code_of([&] { validate_bindings(m, missing); }), ErrorCode::kBindingError);

  TensorStore bad;
  bad.add_f64("conv1.weight", {2, 9}, std::vector<double>(18, 0.1));
  bad.add_f64("conv1.bias", {2}, std::vector<double>(2, 0.0));
  bad.add_f64("fc.weight", {3, 2}, std::vector<double>(6, 0.5));
  EXPECT_EQ(code_of([&] { validate_bindings(m, bad); }), ErrorCode::kBindingError);

  TensorStore wrong_fc;
  wrong_fc.add_f64("conv1.weight", {2, 1, 3, 3}, std::vector<double>(18, 0.1));
  wrong_fc.add_f64("conv1.bias", {2}, std::vector<double>(2, 0.0));
  wrong_fc.add_f64("fc.weight", {3, 5}, std::vector<double>(15, 0.5));
  EXPECT_EQ(code_of([&] { validate_bindings(m, wrong_fc); }), ErrorCode::kSchemaError);

  TensorStore wrong_kernel;
  wrong_kernel.add_f64("conv1.weight", {2, 1, 5, 5}, std::vector<double>(50, 0.1));
  wrong_kernel.add_f64("conv1.bias", {2}, std::vector<double>(2, 0.0));
  wrong_kernel.add_f64("fc.weight", {3, 2}, std::vector<double>(6, 0.5));
  EXPECT_EQ(code_of([&] { validate_bindings(m, wrong_kernel); }), ErrorCode::kSchemaError);
}

TEST(Manifest, LoadsFromDisk) {
  fixtures::TempDir dir;
  std::ofstream(dir / "m.json") << kManifest;
  EXPECT_EQ(load_manifest(dir / "m.json").layers.size(), 6u);
  EXPECT_EQ(code_of([&] { load_manifest(dir / "absent.json"); }), ErrorCode::kIo);
}

TEST(Manifest, LayerKindNames) {
  for (LayerKind k : {LayerKind::kConv2d, LayerKind::kMaxPool, LayerKind::kBlurPool, LayerKind::kRelu,
                      LayerKind::kGlobalAvgPool, LayerKind::kDense}) {
    EXPECT_EQ(parse_layer_kind(to_string(k)), k);
  }
  EXPECT_FALSE(parse_layer_kind("Conv2d"));
}
