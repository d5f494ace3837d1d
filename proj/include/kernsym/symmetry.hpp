// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kernsym/manifest.hpp"
#include "kernsym/safetensors.hpp"
#include "kernsym/tensor.hpp"

namespace kernsym {

struct SymmetryScore {
  double value = 0.0;
  std::string layer_name;
  std::size_t kernel_side = 0;
  /// False when the kernel has zero norm; `value` is then meaningless.
  bool defined = false;
  /// 1x1 kernels score 1 for every input and carry no information.
  bool trivial = false;
};

/// Dihedral symmetry of a kernel:
///
///   S(K) = 1 - 1/(2*7) * sum_{T != e} ||T(K^) - K^||_F,   K^ = K / ||K||_F
///
/// In [0, 1]; 1 exactly when K is fixed by all of D4.
SymmetryScore symmetry_score(const KernelMatrix& k, std::string layer_name = {});

struct LayerSymmetry {
  std::size_t index = 0;
  SymmetryScore score;
  bool strided = false;

  /// Layer name with a trailing '*' when the layer is strided.
  std::string display_name() const;
};

struct SymmetryProfile {
  std::string model;
  std::vector<LayerSymmetry> layers;
};

/// Scores the mean kernel of every conv2d layer whose name matches the glob
/// `name_filter`, in manifest order.
///
/// Throws Error{kMissingWeight} when a binding is absent from `store` and
/// Error{kNonSquareKernel} for non-square or non-rank-4 weights.
SymmetryProfile model_symmetry_profile(const TensorStore& store, const ModelManifest& manifest,
                                       std::string_view name_filter = "*");

struct InitBaseline {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t trials = 0;
};

/// Monte Carlo estimate of E[S(mean of n_kernels Kaiming k x k kernels)].
/// Requires trials >= 100.
InitBaseline expected_init_symmetry(std::size_t k, std::size_t n_kernels, std::size_t trials,
                                    std::uint64_t seed);

bool glob_match(std::string_view pattern, std::string_view text);

}  // namespace kernsym
