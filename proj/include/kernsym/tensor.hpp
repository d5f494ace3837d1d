// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace kernsym {

/// Extents of a rank-4 weight tensor: neurons, channels, height, width.
struct Dims4 {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t count() const { return n * c * h * w; }
  friend bool operator==(const Dims4&, const Dims4&) = default;
};

/// Dense row-major (N, C, H, W) tensor of doubles. Immutable once built;
/// construction rejects zero extents, length mismatches and non-finite data.
class Tensor4 {
 public:
  Tensor4(Dims4 dims, std::vector<double> data);

  static Tensor4 filled(Dims4 dims, double value);

  const Dims4& dims() const { return dims_; }
  std::span<const double> data() const { return data_; }

  double at(std::size_t n, std::size_t c, std::size_t i, std::size_t j) const {
    return data_[((n * dims_.c + c) * dims_.h + i) * dims_.w + j];
  }

 private:
  Dims4 dims_;
  std::vector<double> data_;
};

/// Square k x k matrix in row-major order; used for single and mean kernels.
class KernelMatrix {
 public:
  KernelMatrix(std::size_t k, std::vector<double> entries);
  KernelMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static KernelMatrix zeros(std::size_t k);

  std::size_t side() const { return k_; }
  std::span<const double> entries() const { return entries_; }

  double operator()(std::size_t i, std::size_t j) const { return entries_[i * k_ + j]; }

  friend bool operator==(const KernelMatrix&, const KernelMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<double> entries_;
};

double frobenius_norm(const KernelMatrix& m);

/// m / ||m||_F. Throws Error{kZeroNorm} for an all-zero matrix.
KernelMatrix normalize(const KernelMatrix& m);

/// Unweighted mean over the N*C spatial slices of `w`.
/// Throws Error{kNonSquareKernel} when H != W.
KernelMatrix mean_kernel(const Tensor4& w);

}  // namespace kernsym
