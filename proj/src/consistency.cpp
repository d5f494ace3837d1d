// SPDX-License-Identifier: Apache-2.0

#include "kernsym/consistency.hpp"

#include <algorithm>
#include <cstdlib>

#include <fmt/core.h>

#include "kernsym/error.hpp"

namespace kernsym {

namespace {

void require_same_shape(const SegmentationMap& a, const SegmentationMap& b, const char* what) {
  if (a.h != b.h || a.w != b.w) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("{}: maps are {}x{} and {}x{}", what, a.h, a.w, b.h, b.w));
  }
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

SegmentationMap::SegmentationMap(std::size_t h, std::size_t w, std::vector<std::size_t> labels)
    : h(h), w(w), labels(std::move(labels)) {
  if (this->labels.size() != h * w) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("SegmentationMap: {} labels for {}x{}", this->labels.size(), h, w));
  }
}

SegmentationMap flip_h(const SegmentationMap& m) {
  SegmentationMap out(m.h, m.w, std::vector<std::size_t>(m.labels.size()));
  for (std::size_t y = 0; y < m.h; ++y)
    for (std::size_t x = 0; x < m.w; ++x) out.labels[y * m.w + x] = m.at(y, m.w - 1 - x);
  return out;
}

SegmentationMap argmax_channels(const FeatureMap& scores) {
  SegmentationMap out(scores.h, scores.w, std::vector<std::size_t>(scores.h * scores.w, 0));
  for (std::size_t y = 0; y < scores.h; ++y) {
    for (std::size_t x = 0; x < scores.w; ++x) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < scores.c; ++c) {
        if (scores.at(c, y, x) > scores.at(best, y, x)) best = c;
      }
      out.labels[y * scores.w + x] = best;
    }
  }
  return out;
}

SegmentationMap predict_segmentation(const Network& model, const FeatureMap& image) {
  return argmax_channels(model.evaluate(image));
}

double flip_agreement(const SegmentationMap& of_flipped, const SegmentationMap& original) {
  require_same_shape(of_flipped, original, "flip_agreement");
  std::size_t same = 0;
  for (std::size_t y = 0; y < original.h; ++y)
    for (std::size_t x = 0; x < original.w; ++x)
      if (of_flipped.at(y, x) == original.at(y, original.w - 1 - x)) ++same;
  return static_cast<double>(same) / static_cast<double>(original.labels.size());
}

double shift_agreement(const SegmentationMap& of_shifted, const SegmentationMap& original, int dy,
                       int dx) {
  require_same_shape(of_shifted, original, "shift_agreement");
  const auto h = static_cast<long>(original.h);
  const auto w = static_cast<long>(original.w);
  if (std::labs(dy) >= h || std::labs(dx) >= w) {
    throw Error(ErrorCode::kShiftTooLarge,
                fmt::format("shift ({}, {}) leaves no overlap on a {}x{} map", dy, dx, h, w));
  }
  std::size_t same = 0;
  std::size_t total = 0;
  for (long y = std::max(0L, static_cast<long>(dy)); y < std::min(h, h + dy); ++y) {
    for (long x = std::max(0L, static_cast<long>(dx)); x < std::min(w, w + dx); ++x) {
      ++total;
      if (of_shifted.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) ==
          original.at(static_cast<std::size_t>(y - dy), static_cast<std::size_t>(x - dx))) {
        ++same;
      }
    }
  }
  return static_cast<double>(same) / static_cast<double>(total);
}

ConsistencyReport flip_consistency(const Network& model, const std::vector<FeatureMap>& images) {
  if (images.empty()) throw Error(ErrorCode::kEmptyImageSet, "flip_consistency: no images");
  ConsistencyReport report;
  report.kind = ConsistencyKind::kFlip;
  for (const FeatureMap& image : images) {
    const SegmentationMap original = predict_segmentation(model, image);
    const SegmentationMap flipped = predict_segmentation(model, flip_h(image));
    report.per_image.push_back(flip_agreement(flipped, original));
  }
  report.image_count = images.size();
  report.mean = mean_of(report.per_image);
  return report;
}

ConsistencyReport shift_consistency(const Network& model, const std::vector<FeatureMap>& images,
                                    int dy, int dx) {
  if (images.empty()) throw Error(ErrorCode::kEmptyImageSet, "shift_consistency: no images");
  ConsistencyReport report;
  report.kind = ConsistencyKind::kShift;
  report.shift_dy = dy;
  report.shift_dx = dx;
  for (const FeatureMap& image : images) {
    if (std::abs(dy) >= static_cast<int>(image.h) || std::abs(dx) >= static_cast<int>(image.w)) {
      throw Error(ErrorCode::kShiftTooLarge,
                  fmt::format("shift ({}, {}) too large for a {}x{} image", dy, dx, image.h, image.w));
    }
    const SegmentationMap original = predict_segmentation(model, image);
    const SegmentationMap shifted = predict_segmentation(model, shift(image, dy, dx));
    report.per_image.push_back(shift_agreement(shifted, original, dy, dx));
  }
  report.image_count = images.size();
  report.mean = mean_of(report.per_image);
  return report;
}

double miou(const std::vector<SegmentationMap>& predictions,
            const std::vector<SegmentationMap>& targets, std::size_t n_classes) {
  if (predictions.size() != targets.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("miou: {} predictions for {} targets", predictions.size(), targets.size()));
  }
  std::vector<std::size_t> intersection(n_classes, 0);
  std::vector<std::size_t> pred_count(n_classes, 0);
  std::vector<std::size_t> target_count(n_classes, 0);
  for (std::size_t m = 0; m < predictions.size(); ++m) {
    const SegmentationMap& p = predictions[m];
    const SegmentationMap& t = targets[m];
    require_same_shape(p, t, "miou");
    for (std::size_t i = 0; i < p.labels.size(); ++i) {
      if (p.labels[i] >= n_classes || t.labels[i] >= n_classes) {
        throw Error(ErrorCode::kIndexOutOfRange,
                    fmt::format("miou: class index {} at map {} pixel {} with {} classes",
                                std::max(p.labels[i], t.labels[i]), m, i, n_classes));
      }
      ++pred_count[p.labels[i]];
      ++target_count[t.labels[i]];
      if (p.labels[i] == t.labels[i]) ++intersection[p.labels[i]];
    }
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::size_t uni = pred_count[c] + target_count[c] - intersection[c];
    if (uni == 0) continue;
    sum += static_cast<double>(intersection[c]) / static_cast<double>(uni);
    ++present;
  }
  return present == 0 ? 1.0 : sum / static_cast<double>(present);
}

std::vector<NamedImage> load_image_set(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw Error(ErrorCode::kIo, fmt::format("'{}' is not a directory", dir.string()));
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".safetensors") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedImage> images;
  for (const auto& file : files) {
    const TensorStore store = load_safetensors(file);
    for (const StoredTensor& t : store.tensors()) {
      if (t.shape.size() != 3 || t.element_count() == 0) {
        throw Error(ErrorCode::kShapeMismatch,
                    fmt::format("{}: image tensor '{}' must have shape [C, H, W]", file.string(), t.name));
      }
      images.push_back({file.stem().string() + "/" + t.name,
                        FeatureMap(t.shape[0], t.shape[1], t.shape[2], t.to_doubles())});
    }
  }
  return images;
}

}  // namespace kernsym
