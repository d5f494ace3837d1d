// SPDX-License-Identifier: Apache-2.0
// Small model/store builders shared by the unit and acceptance tests.

#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "kernsym/engine.hpp"
#include "kernsym/manifest.hpp"
#include "kernsym/rng.hpp"
#include "kernsym/safetensors.hpp"

namespace fixtures {

struct ModelBuilder {
  kernsym::ModelManifest manifest;
  kernsym::TensorStore store;
  kernsym::SplitMix64 rng;
  std::size_t channels;

  ModelBuilder(std::string name, std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed)
      : rng(seed), channels(c) {
    manifest.model = std::move(name);
    manifest.input = {h, w, c};
  }

  std::vector<double> normals(std::size_t n, double scale = 0.5) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
  }

  // Random weights; `mirror` makes every kernel left-right symmetric.
  ModelBuilder& conv(const std::string& name, std::size_t out_c, const kernsym::ConvLayerSpec& spec,
                     bool bias = true, bool mirror = false) {
    const std::size_t kh = spec.kernel.h, kw = spec.kernel.w;
    std::vector<double> w = normals(out_c * channels * kh * kw);
    if (mirror) {
      for (std::size_t s = 0; s < out_c * channels; ++s)
        for (std::size_t i = 0; i < kh; ++i)
          for (std::size_t j = 0; j < kw / 2; ++j)
            w[(s * kh + i) * kw + (kw - 1 - j)] = w[(s * kh + i) * kw + j];
    }
    return conv_with(name, out_c, spec, w, bias ? normals(out_c, 0.1) : std::vector<double>{});
  }

  ModelBuilder& conv_with(const std::string& name, std::size_t out_c, const kernsym::ConvLayerSpec& spec,
                          const std::vector<double>& w, const std::vector<double>& bias) {
    kernsym::LayerSpec l;
    l.name = name;
    l.kind = kernsym::LayerKind::kConv2d;
    l.conv = spec;
    l.weight = name + ".weight";
    store.add_f64(l.weight, {out_c, channels, spec.kernel.h, spec.kernel.w}, w);
    if (!bias.empty()) {
      l.bias = name + ".bias";
      store.add_f64(*l.bias, {out_c}, bias);
    }
    manifest.layers.push_back(l);
    channels = out_c;
    return *this;
  }

  ModelBuilder& plain(const std::string& name, kernsym::LayerKind kind, const kernsym::ConvLayerSpec& spec = {}) {
    kernsym::LayerSpec l;
    l.name = name;
    l.kind = kind;
    if (kind == kernsym::LayerKind::kBlurPool) {
      l.conv = kernsym::blurpool_geometry();
    } else {
      l.conv = spec;
    }
    manifest.layers.push_back(l);
    return *this;
  }

  ModelBuilder& dense(const std::string& name, std::size_t in_features, std::size_t out_features) {
    kernsym::LayerSpec l;
    l.name = name;
    l.kind = kernsym::LayerKind::kDense;
    l.weight = name + ".weight";
    l.bias = name + ".bias";
    store.add_f64(l.weight, {out_features, in_features}, normals(out_features * in_features));
    store.add_f64(*l.bias, {out_features}, normals(out_features, 0.1));
    manifest.layers.push_back(l);
    channels = out_features;
    return *this;
  }

  kernsym::Network network() const { return kernsym::Network::from_manifest(manifest, store); }
};

inline kernsym::FeatureMap random_image(kernsym::SplitMix64& rng, std::size_t c, std::size_t h, std::size_t w) {
  kernsym::FeatureMap x(c, h, w);
  for (double& v : x.data) v = rng.normal();
  return x;
}

// Unique scratch directory under the system temp dir, removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("kernsym-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace fixtures
