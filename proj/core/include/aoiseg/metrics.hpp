#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aoiseg/raster.hpp"

namespace aoiseg {

/// Per-class binarization, strict inequality: pixel gets class c iff
/// soft > thresholds[c]. Thresholds must lie in (0, 1).
MultiLabelMask apply_thresholds(const SoftMask& soft,
                                std::span<const float> thresholds);

/// Dataset-level (micro) IoU accumulator. Counts are exact integers; reports
/// are mergeable monoids, so parallel per-image accumulation followed by
/// merge equals sequential accumulation exactly.
struct IoUReport {
  std::vector<std::uint64_t> intersection;
  std::vector<std::uint64_t> union_count;

  IoUReport() = default;
  explicit IoUReport(std::uint16_t classes)
      : intersection(classes, 0), union_count(classes, 0) {}

  std::uint16_t classes() const {
    return static_cast<std::uint16_t>(intersection.size());
  }

  void accumulate(const MultiLabelMask& pred, const MultiLabelMask& gt);
  void merge(const IoUReport& other);

  /// nullopt when the class union is zero (class absent from pred and gt).
  std::optional<double> class_iou(std::uint16_t cls) const;

  /// Mean of per-class IoUs over classes with union > 0; classes that never
  /// occur are excluded. Errors when every union is zero.
  double miou() const;

  /// JSON text with exact integer counts for auditability.
  std::string to_json() const;

  bool operator==(const IoUReport&) const = default;
};

/// Per-image (macro) aggregation: per-class IoU is averaged over the images
/// where that class occurs. Micro (IoUReport) is the default everywhere;
/// this exists for comparison runs.
struct MacroIoUAccumulator {
  std::vector<double> iou_sum;
  std::vector<std::uint64_t> image_count;

  MacroIoUAccumulator() = default;
  explicit MacroIoUAccumulator(std::uint16_t classes)
      : iou_sum(classes, 0.0), image_count(classes, 0) {}

  void add_image(const MultiLabelMask& pred, const MultiLabelMask& gt);
  double miou() const;
};

/// fraction[c] = set pixels of class c / set pixels over all classes.
std::vector<double> class_frequency(std::span<const MultiLabelMask> masks);

}  // namespace aoiseg
