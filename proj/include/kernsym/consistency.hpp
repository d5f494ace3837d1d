// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "kernsym/engine.hpp"

namespace kernsym {

/// H x W grid of class indices.
struct SegmentationMap {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::size_t> labels;

  SegmentationMap() = default;
  SegmentationMap(std::size_t h, std::size_t w, std::vector<std::size_t> labels);

  std::size_t at(std::size_t y, std::size_t x) const { return labels[y * w + x]; }

  friend bool operator==(const SegmentationMap&, const SegmentationMap&) = default;
};

SegmentationMap flip_h(const SegmentationMap& m);

/// Per-pixel argmax over channels; ties go to the lowest class index.
SegmentationMap argmax_channels(const FeatureMap& scores);

SegmentationMap predict_segmentation(const Network& model, const FeatureMap& image);

/// Fraction of pixels where `of_flipped` equals flip_h(`original`).
double flip_agreement(const SegmentationMap& of_flipped, const SegmentationMap& original);

/// Fraction of agreeing pixels between `of_shifted` and shift(`original`,
/// dy, dx), counted over the overlap only (vacated rows and columns are
/// excluded from numerator and denominator).
double shift_agreement(const SegmentationMap& of_shifted, const SegmentationMap& original, int dy,
                       int dx);

enum class ConsistencyKind { kFlip, kShift };

struct ConsistencyReport {
  ConsistencyKind kind = ConsistencyKind::kFlip;
  std::vector<double> per_image;
  double mean = 0.0;
  std::size_t image_count = 0;
  int shift_dy = 0;
  int shift_dx = 0;
};

/// Throws Error{kEmptyImageSet} for an empty set.
ConsistencyReport flip_consistency(const Network& model, const std::vector<FeatureMap>& images);

/// Shifts are applied in image coordinates and compared in prediction
/// coordinates, so the model must preserve spatial scale (stride 1).
/// Throws Error{kShiftTooLarge} unless |dy| < H and |dx| < W of every map.
ConsistencyReport shift_consistency(const Network& model, const std::vector<FeatureMap>& images,
                                    int dy, int dx);

/// Mean IoU over classes present in the union of predictions and targets,
/// with intersections and unions accumulated across all maps.
double miou(const std::vector<SegmentationMap>& predictions,
            const std::vector<SegmentationMap>& targets, std::size_t n_classes);

struct NamedImage {
  std::string name;
  FeatureMap image;
};

/// Every rank-3 (C, H, W) tensor of every *.safetensors file in `dir`,
/// files in lexicographic order, tensors in insertion order.
std::vector<NamedImage> load_image_set(const std::filesystem::path& dir);

}  // namespace kernsym
