// SPDX-License-Identifier: Apache-2.0

#include "kernsym/safetensors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "kernsym/error.hpp"

namespace kernsym {

namespace {

using json = nlohmann::ordered_json;

std::uint64_t load_le(const std::uint8_t* p, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

void store_le(std::uint8_t* p, std::uint64_t v, std::size_t width) {
  for (std::size_t i = 0; i < width; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::optional<Dtype> parse_dtype(std::string_view tag) {
  if (tag == "F16") return Dtype::kF16;
  if (tag == "F32") return Dtype::kF32;
  if (tag == "F64") return Dtype::kF64;
  return std::nullopt;
}

std::size_t checked_byte_length(const std::vector<std::size_t>& shape, Dtype dtype, bool& overflow) {
  std::size_t n = dtype_width(dtype);
  overflow = false;
  for (std::size_t d : shape) {
    if (__builtin_mul_overflow(n, d, &n)) {
      overflow = true;
      return 0;
    }
  }
  return n;
}

[[noreturn]] void malformed(const std::string& msg) {
  throw Error(ErrorCode::kMalformedHeader, "safetensors header: " + msg);
}

}  // namespace

std::string_view to_string(Dtype dtype) {
  switch (dtype) {
    case Dtype::kF16: return "F16";
    case Dtype::kF32: return "F32";
    case Dtype::kF64: return "F64";
  }
  return "?";
}

std::size_t dtype_width(Dtype dtype) {
  switch (dtype) {
    case Dtype::kF16: return 2;
    case Dtype::kF32: return 4;
    case Dtype::kF64: return 8;
  }
  return 0;
}

double half_to_double(std::uint16_t bits) {
  const int sign = (bits >> 15) & 1;
  const int exponent = (bits >> 10) & 0x1f;
  const int mantissa = bits & 0x3ff;
  double magnitude;
  if (exponent == 0) {
    magnitude = std::ldexp(static_cast<double>(mantissa), -24);
  } else if (exponent == 0x1f) {
    magnitude = mantissa == 0 ? std::numeric_limits<double>::infinity()
                              : std::numeric_limits<double>::quiet_NaN();
  } else {
    magnitude = std::ldexp(static_cast<double>(mantissa | 0x400), exponent - 25);
  }
  return sign ? -magnitude : magnitude;
}

std::size_t StoredTensor::element_count() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::vector<double> StoredTensor::to_doubles() const {
  const std::size_t width = dtype_width(dtype);
  const std::size_t count = bytes.size() / width;
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t raw = load_le(bytes.data() + i * width, width);
    switch (dtype) {
      case Dtype::kF16: out[i] = half_to_double(static_cast<std::uint16_t>(raw)); break;
      case Dtype::kF32: out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(raw)); break;
      case Dtype::kF64: out[i] = std::bit_cast<double>(raw); break;
    }
  }
  return out;
}

Tensor4 StoredTensor::to_tensor4() const {
  if (shape.size() != 4) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("tensor '{}' has rank {}, expected 4", name, shape.size()));
  }
  try {
    return Tensor4({shape[0], shape[1], shape[2], shape[3]}, to_doubles());
  } catch (const Error& e) {
    throw Error(e.code(), fmt::format("tensor '{}': {}", name, e.what()));
  }
}

void TensorStore::add(StoredTensor tensor) {
  if (index_.contains(tensor.name)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("duplicate tensor name '{}'", tensor.name));
  }
  bool overflow = false;
  const std::size_t expected = checked_byte_length(tensor.shape, tensor.dtype, overflow);
  if (overflow || expected != tensor.bytes.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("tensor '{}': {} bytes do not match shape and dtype", tensor.name,
                            tensor.bytes.size()));
  }
  index_.emplace(tensor.name, tensors_.size());
  tensors_.push_back(std::move(tensor));
}

void TensorStore::add_f64(std::string name, std::vector<std::size_t> shape,
                          std::span<const double> values) {
  StoredTensor t{std::move(name), Dtype::kF64, std::move(shape), {}};
  t.bytes.resize(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    store_le(t.bytes.data() + i * 8, std::bit_cast<std::uint64_t>(values[i]), 8);
  }
  add(std::move(t));
}

void TensorStore::add_f32(std::string name, std::vector<std::size_t> shape,
                          std::span<const double> values) {
  StoredTensor t{std::move(name), Dtype::kF32, std::move(shape), {}};
  t.bytes.resize(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto f = static_cast<float>(values[i]);
    store_le(t.bytes.data() + i * 4, std::bit_cast<std::uint32_t>(f), 4);
  }
  add(std::move(t));
}

const StoredTensor* TensorStore::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &tensors_[it->second];
}

TensorStore parse_safetensors(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) {
    throw Error(ErrorCode::kTruncatedFile,
                fmt::format("safetensors: {} bytes is too short for the header length", bytes.size()));
  }
  const std::uint64_t header_len = load_le(bytes.data(), 8);
  if (header_len > bytes.size() - 8) {
    throw Error(ErrorCode::kTruncatedFile,
                fmt::format("safetensors: header length {} exceeds the {} bytes available",
                            header_len, bytes.size() - 8));
  }
  const auto header_begin = bytes.begin() + 8;
  const auto header_end = header_begin + static_cast<std::ptrdiff_t>(header_len);
  const json header = json::parse(header_begin, header_end, nullptr, false);
  if (header.is_discarded()) malformed("invalid JSON");
  if (!header.is_object()) malformed("top level is not an object");

  const std::span<const std::uint8_t> buffer = bytes.subspan(8 + header_len);

  struct Entry {
    StoredTensor tensor;
    std::uint64_t begin;
    std::uint64_t end;
  };
  std::vector<Entry> entries;
  TensorStore store;

  for (const auto& [key, value] : header.items()) {
    if (key == "__metadata__") {
      if (!value.is_object()) malformed("__metadata__ is not an object");
      for (const auto& [mk, mv] : value.items()) {
        if (!mv.is_string()) malformed(fmt::format("__metadata__ value for '{}' is not a string", mk));
        store.metadata().emplace_back(mk, mv.get<std::string>());
      }
      continue;
    }
    if (!value.is_object()) malformed(fmt::format("entry '{}' is not an object", key));
    const auto dtype_it = value.find("dtype");
    const auto shape_it = value.find("shape");
    const auto offsets_it = value.find("data_offsets");
    if (dtype_it == value.end() || !dtype_it->is_string()) {
      malformed(fmt::format("entry '{}': missing or non-string dtype", key));
    }
    if (shape_it == value.end() || !shape_it->is_array()) {
      malformed(fmt::format("entry '{}': missing or non-array shape", key));
    }
    if (offsets_it == value.end() || !offsets_it->is_array() || offsets_it->size() != 2) {
      malformed(fmt::format("entry '{}': data_offsets must be a 2-element array", key));
    }
    StoredTensor t;
    t.name = key;
    for (const auto& d : *shape_it) {
      if (!d.is_number_unsigned()) malformed(fmt::format("entry '{}': shape entries must be non-negative integers", key));
      t.shape.push_back(d.get<std::size_t>());
    }
    for (const auto& o : *offsets_it) {
      if (!o.is_number_unsigned()) malformed(fmt::format("entry '{}': offsets must be non-negative integers", key));
    }
    const auto tag = dtype_it->get<std::string>();
    const auto dtype = parse_dtype(tag);
    if (!dtype) {
      throw Error(ErrorCode::kUnsupportedDtype,
                  fmt::format("safetensors: entry '{}' has unsupported dtype {}", key, tag));
    }
    t.dtype = *dtype;
    const auto begin = (*offsets_it)[0].get<std::uint64_t>();
    const auto end = (*offsets_it)[1].get<std::uint64_t>();
    if (begin > end || end > buffer.size()) {
      throw Error(ErrorCode::kBadOffsets,
                  fmt::format("safetensors: entry '{}' offsets [{}, {}) outside the {}-byte buffer",
                              key, begin, end, buffer.size()));
    }
    bool overflow = false;
    const std::size_t expected = checked_byte_length(t.shape, t.dtype, overflow);
    if (overflow || expected != end - begin) {
      throw Error(ErrorCode::kBadOffsets,
                  fmt::format("safetensors: entry '{}' spans {} bytes but shape and dtype need {}",
                              key, end - begin, expected));
    }
    entries.push_back({std::move(t), begin, end});
  }

  std::vector<const Entry*> by_offset;
  for (const auto& e : entries) by_offset.push_back(&e);
  std::sort(by_offset.begin(), by_offset.end(),
            [](const Entry* a, const Entry* b) { return a->begin < b->begin; });
  for (std::size_t i = 1; i < by_offset.size(); ++i) {
    if (by_offset[i]->begin < by_offset[i - 1]->end) {
      throw Error(ErrorCode::kBadOffsets,
                  fmt::format("safetensors: entries '{}' and '{}' overlap",
                              by_offset[i - 1]->tensor.name, by_offset[i]->tensor.name));
    }
  }

  for (auto& e : entries) {
    e.tensor.bytes.assign(buffer.begin() + static_cast<std::ptrdiff_t>(e.begin),
                          buffer.begin() + static_cast<std::ptrdiff_t>(e.end));
    store.add(std::move(e.tensor));
  }
  return store;
}

std::vector<std::uint8_t> write_safetensors(const TensorStore& store) {
  json header = json::object();
  if (!store.metadata().empty()) {
    json meta = json::object();
    for (const auto& [k, v] : store.metadata()) meta[k] = v;
    header["__metadata__"] = std::move(meta);
  }
  std::uint64_t offset = 0;
  for (const auto& t : store.tensors()) {
    json entry = json::object();
    entry["dtype"] = to_string(t.dtype);
    entry["shape"] = t.shape;
    entry["data_offsets"] = {offset, offset + t.bytes.size()};
    header[t.name] = std::move(entry);
    offset += t.bytes.size();
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(8 + text.size() + offset);
  store_le(out.data(), text.size(), 8);
  std::memcpy(out.data() + 8, text.data(), text.size());
  std::size_t pos = 8 + text.size();
  for (const auto& t : store.tensors()) {
    std::copy(t.bytes.begin(), t.bytes.end(), out.begin() + static_cast<std::ptrdiff_t>(pos));
    pos += t.bytes.size();
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot open '{}'", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIo, fmt::format("error reading '{}'", path.string()));
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, fmt::format("error writing '{}'", path.string()));
}

TensorStore load_safetensors(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_safetensors(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), fmt::format("{}: {}", path.string(), e.what()));
  }
}

void save_safetensors(const std::filesystem::path& path, const TensorStore& store) {
  write_file_bytes(path, write_safetensors(store));
}

}  // namespace kernsym
