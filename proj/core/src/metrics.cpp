#include "aoiseg/metrics.hpp"

#include <bit>
#include <cmath>
#include <sstream>

#include "aoiseg/error.hpp"

namespace aoiseg {

namespace {

void check_same_geometry(const MultiLabelMask& a, const MultiLabelMask& b) {
  if (a.height != b.height || a.width != b.width || a.classes != b.classes) {
    fail(Errc::dimension_mismatch,
         "masks " + std::to_string(a.height) + "x" + std::to_string(a.width) +
             "x" + std::to_string(a.classes) + " vs " +
             std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
             std::to_string(b.classes));
  }
}

}  // namespace

MultiLabelMask apply_thresholds(const SoftMask& soft,
                                std::span<const float> thresholds) {
  if (thresholds.size() != soft.classes) {
    fail(Errc::dimension_mismatch,
         "expected " + std::to_string(soft.classes) + " thresholds, got " +
             std::to_string(thresholds.size()));
  }
  for (const float t : thresholds) {
    if (!(t > 0.0f) || !(t < 1.0f)) {
      fail(Errc::invalid_spec,
           "thresholds must lie in the open interval (0, 1), got " +
               std::to_string(t));
    }
  }
  MultiLabelMask out =
      MultiLabelMask::empty(soft.height, soft.width, soft.classes);
  const std::size_t pixels = soft.pixel_count();
  for (std::size_t p = 0; p < pixels; ++p) {
    const float* v = soft.values.data() + p * soft.classes;
    for (std::uint16_t cls = 0; cls < soft.classes; ++cls) {
      if (v[cls] > thresholds[cls]) {
        out.set_index(p, cls, true);
      }
    }
  }
  return out;
}

void IoUReport::accumulate(const MultiLabelMask& pred,
                           const MultiLabelMask& gt) {
  check_same_geometry(pred, gt);
  if (intersection.empty()) {
    intersection.assign(pred.classes, 0);
    union_count.assign(pred.classes, 0);
  }
  if (classes() != pred.classes) {
    fail(Errc::dimension_mismatch,
         "report tracks " + std::to_string(classes()) + " classes, masks have " +
             std::to_string(pred.classes));
  }
  const std::size_t pw = pred.plane_words();
  for (std::uint16_t cls = 0; cls < pred.classes; ++cls) {
    const std::uint64_t* p = pred.words.data() + cls * pw;
    const std::uint64_t* g = gt.words.data() + cls * pw;
    std::uint64_t inter = 0;
    std::uint64_t uni = 0;
    for (std::size_t w = 0; w < pw; ++w) {
      inter += std::popcount(p[w] & g[w]);
      uni += std::popcount(p[w] | g[w]);
    }
    intersection[cls] += inter;
    union_count[cls] += uni;
  }
}

void IoUReport::merge(const IoUReport& other) {
  if (intersection.empty()) {
    *this = other;
    return;
  }
  if (other.intersection.empty()) return;
  if (classes() != other.classes()) {
    fail(Errc::dimension_mismatch, "cannot merge reports over different C");
  }
  for (std::uint16_t cls = 0; cls < classes(); ++cls) {
    intersection[cls] += other.intersection[cls];
    union_count[cls] += other.union_count[cls];
  }
}

std::optional<double> IoUReport::class_iou(std::uint16_t cls) const {
  if (union_count[cls] == 0) return std::nullopt;
  return static_cast<double>(intersection[cls]) /
         static_cast<double>(union_count[cls]);
}

double IoUReport::miou() const {
  double sum = 0.0;
  std::uint32_t defined = 0;
  for (std::uint16_t cls = 0; cls < classes(); ++cls) {
    if (const auto iou = class_iou(cls)) {
      sum += *iou;
      ++defined;
    }
  }
  if (defined == 0) {
    fail(Errc::undefined_metric,
         "mIoU undefined: every class union is zero");
  }
  return sum / defined;
}

std::string IoUReport::to_json() const {
  std::ostringstream out;
  out.precision(9);
  out << "{\n  \"classes\": " << classes() << ",\n  \"per_class\": [\n";
  for (std::uint16_t cls = 0; cls < classes(); ++cls) {
    out << "    {\"intersection\": " << intersection[cls]
        << ", \"union\": " << union_count[cls] << ", \"iou\": ";
    if (const auto iou = class_iou(cls)) {
      out << *iou;
    } else {
      out << "null";
    }
    out << "}" << (cls + 1 < classes() ? "," : "") << "\n";
  }
  out << "  ],\n  \"miou\": ";
  bool any = false;
  for (std::uint16_t cls = 0; cls < classes(); ++cls) {
    any = any || union_count[cls] > 0;
  }
  if (any) {
    out << miou();
  } else {
    out << "null";
  }
  out << "\n}\n";
  return out.str();
}

void MacroIoUAccumulator::add_image(const MultiLabelMask& pred,
                                    const MultiLabelMask& gt) {
  check_same_geometry(pred, gt);
  if (iou_sum.empty()) {
    iou_sum.assign(pred.classes, 0.0);
    image_count.assign(pred.classes, 0);
  }
  IoUReport one(pred.classes);
  one.accumulate(pred, gt);
  for (std::uint16_t cls = 0; cls < pred.classes; ++cls) {
    if (const auto iou = one.class_iou(cls)) {
      iou_sum[cls] += *iou;
      ++image_count[cls];
    }
  }
}

double MacroIoUAccumulator::miou() const {
  double sum = 0.0;
  std::uint32_t defined = 0;
  for (std::size_t cls = 0; cls < iou_sum.size(); ++cls) {
    if (image_count[cls] > 0) {
      sum += iou_sum[cls] / static_cast<double>(image_count[cls]);
      ++defined;
    }
  }
  if (defined == 0) {
    fail(Errc::undefined_metric, "macro mIoU undefined: no class occurred");
  }
  return sum / defined;
}

std::vector<double> class_frequency(std::span<const MultiLabelMask> masks) {
  if (masks.empty()) {
    fail(Errc::insufficient_data, "class_frequency needs a nonempty dataset");
  }
  const std::uint16_t classes = masks[0].classes;
  std::vector<std::uint64_t> counts(classes, 0);
  for (const auto& m : masks) {
    if (m.classes != classes) {
      fail(Errc::dimension_mismatch, "masks disagree on class count");
    }
    for (std::uint16_t cls = 0; cls < classes; ++cls) {
      counts[cls] += m.count(cls);
    }
  }
  std::uint64_t total = 0;
  for (const auto c : counts) total += c;
  if (total == 0) {
    fail(Errc::undefined_statistics,
         "class_frequency undefined: dataset has no labeled pixels");
  }
  std::vector<double> out(classes);
  for (std::uint16_t cls = 0; cls < classes; ++cls) {
    out[cls] = static_cast<double>(counts[cls]) / static_cast<double>(total);
  }
  return out;
}

}  // namespace aoiseg
