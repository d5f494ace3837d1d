// SPDX-License-Identifier: Apache-2.0

#include "kernsym/tensor.hpp"

#include <cmath>

#include <fmt/core.h>

#include "kernsym/error.hpp"

namespace kernsym {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::kNonFinite,
                  fmt::format("{}: non-finite value {} at flat index {}", what, values[i], i));
    }
  }
}

}  // namespace

Tensor4::Tensor4(Dims4 dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
  if (dims_.n == 0 || dims_.c == 0 || dims_.h == 0 || dims_.w == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("Tensor4: zero extent in dims ({}, {}, {}, {})", dims_.n, dims_.c,
                            dims_.h, dims_.w));
  }
  if (data_.size() != dims_.count()) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("Tensor4: {} elements given for dims ({}, {}, {}, {})", data_.size(),
                            dims_.n, dims_.c, dims_.h, dims_.w));
  }
  require_finite(data_, "Tensor4");
}

Tensor4 Tensor4::filled(Dims4 dims, double value) {
  return Tensor4(dims, std::vector<double>(dims.count(), value));
}

KernelMatrix::KernelMatrix(std::size_t k, std::vector<double> entries)
    : k_(k), entries_(std::move(entries)) {
  if (k_ == 0) {
    throw Error(ErrorCode::kInvalidArgument, "KernelMatrix: side must be >= 1");
  }
  if (entries_.size() != k_ * k_) {
    throw Error(ErrorCode::kNonSquareKernel,
                fmt::format("KernelMatrix: {} entries for side {}", entries_.size(), k_));
  }
  require_finite(entries_, "KernelMatrix");
}

KernelMatrix::KernelMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : k_(rows.size()) {
  if (k_ == 0) {
    throw Error(ErrorCode::kInvalidArgument, "KernelMatrix: side must be >= 1");
  }
  entries_.reserve(k_ * k_);
  for (const auto& row : rows) {
    if (row.size() != k_) {
      throw Error(ErrorCode::kNonSquareKernel, "KernelMatrix: rows must have k entries");
    }
    entries_.insert(entries_.end(), row.begin(), row.end());
  }
  require_finite(entries_, "KernelMatrix");
}

KernelMatrix KernelMatrix::zeros(std::size_t k) { return KernelMatrix(k, std::vector<double>(k * k)); }

double frobenius_norm(const KernelMatrix& m) {
  double sum = 0.0;
  for (double v : m.entries()) sum += v * v;
  return std::sqrt(sum);
}

KernelMatrix normalize(const KernelMatrix& m) {
  const double norm = frobenius_norm(m);
  if (norm == 0.0) {
    throw Error(ErrorCode::kZeroNorm, "normalize: kernel has zero Frobenius norm");
  }
  std::vector<double> out(m.entries().begin(), m.entries().end());
  for (double& v : out) v /= norm;
  return KernelMatrix(m.side(), std::move(out));
}

KernelMatrix mean_kernel(const Tensor4& w) {
  const Dims4& d = w.dims();
  if (d.h != d.w) {
    throw Error(ErrorCode::kNonSquareKernel,
                fmt::format("mean_kernel: spatial dims {}x{} are not square", d.h, d.w));
  }
  const std::size_t k = d.h;
  const std::size_t slices = d.n * d.c;
  std::vector<double> acc(k * k, 0.0);
  const auto data = w.data();
  for (std::size_t s = 0; s < slices; ++s) {
    const double* slice = data.data() + s * k * k;
    for (std::size_t i = 0; i < k * k; ++i) acc[i] += slice[i];
  }
  for (double& v : acc) v /= static_cast<double>(slices);
  return KernelMatrix(k, std::move(acc));
}

}  // namespace kernsym
