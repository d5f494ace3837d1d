// SPDX-License-Identifier: Apache-2.0

#include "kernsym/symmetry.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "kernsym/dihedral.hpp"
#include "kernsym/emergence.hpp"
#include "kernsym/error.hpp"

namespace kernsym {

SymmetryScore symmetry_score(const KernelMatrix& k, std::string layer_name) {
  SymmetryScore out;
  out.layer_name = std::move(layer_name);
  out.kernel_side = k.side();
  out.trivial = k.side() == 1;

  const double norm = frobenius_norm(k);
  if (norm == 0.0) return out;
  out.defined = true;

  const std::size_t n = k.side();
  const auto entries = k.entries();
  double total = 0.0;
  for (D4 t : non_identity_set()) {
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        // T(K)(dest(i,j)) = K(i,j), so ||T(K)-K||^2 pairs K(i,j) with K(dest).
        const auto [di, dj] = destination(t, i, j, n);
        const double d = entries[i * n + j] - entries[di * n + dj];
        sq += d * d;
      }
    }
    total += std::sqrt(sq) / norm;
  }
  const auto m = static_cast<double>(non_identity_set().size());
  out.value = std::clamp(1.0 - total / (2.0 * m), 0.0, 1.0);
  return out;
}

std::string LayerSymmetry::display_name() const {
  return strided ? score.layer_name + "*" : score.layer_name;
}

bool glob_match(std::string_view pattern, std::string_view text) {
  return fnmatch(std::string(pattern).c_str(), std::string(text).c_str(), 0) == 0;
}

SymmetryProfile model_symmetry_profile(const TensorStore& store, const ModelManifest& manifest,
                                       std::string_view name_filter) {
  SymmetryProfile profile;
  profile.model = manifest.model;
  for (std::size_t i = 0; i < manifest.layers.size(); ++i) {
    const LayerSpec& layer = manifest.layers[i];
    if (layer.kind != LayerKind::kConv2d || !glob_match(name_filter, layer.name)) continue;
    const StoredTensor* t = store.find(layer.weight);
    if (t == nullptr) {
      throw Error(ErrorCode::kMissingWeight,
                  fmt::format("layer {} ('{}'): weight '{}' not found", i, layer.name, layer.weight));
    }
    if (t->shape.size() != 4 || t->shape[2] != t->shape[3]) {
      throw Error(ErrorCode::kNonSquareKernel,
                  fmt::format("layer {} ('{}'): weight '{}' is not a square rank-4 kernel tensor", i,
                              layer.name, layer.weight));
    }
    LayerSymmetry entry;
    entry.index = i;
    entry.strided = layer.conv.stride.h > 1 || layer.conv.stride.w > 1;
    entry.score = symmetry_score(mean_kernel(t->to_tensor4()), layer.name);
    profile.layers.push_back(std::move(entry));
  }
  return profile;
}

InitBaseline expected_init_symmetry(std::size_t k, std::size_t n_kernels, std::size_t trials,
                                    std::uint64_t seed) {
  if (trials < 100) {
    throw Error(ErrorCode::kInvalidArgument, "expected_init_symmetry: trials must be >= 100");
  }
  if (k == 0 || n_kernels == 0) {
    throw Error(ErrorCode::kInvalidArgument, "expected_init_symmetry: k and n_kernels must be >= 1");
  }
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t used = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const Tensor4 w = kaiming_init({n_kernels, 1, k, k}, derive_seed(seed, t));
    const SymmetryScore s = symmetry_score(mean_kernel(w));
    if (!s.defined) continue;
    sum += s.value;
    sum_sq += s.value * s.value;
    ++used;
  }
  InitBaseline out;
  out.trials = used;
  out.mean = sum / static_cast<double>(used);
  const double var = std::max(0.0, (sum_sq - used * out.mean * out.mean) / static_cast<double>(used - 1));
  out.std_error = std::sqrt(var / static_cast<double>(used));
  return out;
}

}  // namespace kernsym
