// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kernsym/tensor.hpp"

namespace kernsym {

enum class Dtype { kF16, kF32, kF64 };

std::string_view to_string(Dtype dtype);
std::size_t dtype_width(Dtype dtype);

struct StoredTensor {
  std::string name;
  Dtype dtype = Dtype::kF32;
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> bytes;

  std::size_t element_count() const;

  /// Elements decoded from little-endian storage and widened to double.
  std::vector<double> to_doubles() const;

  /// Throws Error{kShapeMismatch} unless the tensor is rank 4.
  Tensor4 to_tensor4() const;

  friend bool operator==(const StoredTensor&, const StoredTensor&) = default;
};

/// Insertion-ordered collection of named tensors, as held in a safetensors
/// container. The optional `__metadata__` string map is carried along.
class TensorStore {
 public:
  /// Throws Error{kInvalidArgument} on duplicate names or byte length that
  /// disagrees with shape and dtype.
  void add(StoredTensor tensor);

  void add_f64(std::string name, std::vector<std::size_t> shape, std::span<const double> values);
  void add_f32(std::string name, std::vector<std::size_t> shape, std::span<const double> values);

  const StoredTensor* find(std::string_view name) const;
  const std::vector<StoredTensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return tensors_.empty(); }

  std::vector<std::pair<std::string, std::string>>& metadata() { return metadata_; }
  const std::vector<std::pair<std::string, std::string>>& metadata() const { return metadata_; }

  friend bool operator==(const TensorStore& a, const TensorStore& b) {
    return a.tensors_ == b.tensors_ && a.metadata_ == b.metadata_;
  }

 private:
  std::vector<StoredTensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::pair<std::string, std::string>> metadata_;
};

/// Parses a safetensors container: an 8-byte little-endian header length L,
/// L bytes of JSON header, then the data buffer that `data_offsets` index.
///
/// Errors: kTruncatedFile, kMalformedHeader, kBadOffsets, kUnsupportedDtype.
TensorStore parse_safetensors(std::span<const std::uint8_t> bytes);

/// Canonical serialization: minified header with `__metadata__` first (when
/// present) then tensors in insertion order with contiguous ascending offsets.
std::vector<std::uint8_t> write_safetensors(const TensorStore& store);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

TensorStore load_safetensors(const std::filesystem::path& path);
void save_safetensors(const std::filesystem::path& path, const TensorStore& store);

/// IEEE-754 binary16 to double, including subnormals, inf and NaN.
double half_to_double(std::uint16_t bits);

}  // namespace kernsym
