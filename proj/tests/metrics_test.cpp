#include "aoiseg/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

#include "aoiseg/error.hpp"
#include "test_util.hpp"

namespace aoiseg {
namespace {

using ::aoiseg::testing::code_of;
using ::aoiseg::testing::random_mask;

SoftMask uniform_soft(std::uint32_t h, std::uint32_t w, std::uint16_t classes,
                      float value) {
  SoftMask soft = SoftMask::zeros(h, w, classes);
  for (float& v : soft.values) v = value;
  return soft;
}

TEST(ApplyThresholds, UniformAboveThresholdSetsAll) {
  const SoftMask soft = uniform_soft(4, 4, 2, 0.6f);
  const MultiLabelMask mask =
      apply_thresholds(soft, std::vector<float>{0.5f, 0.5f});
  for (std::uint16_t cls = 0; cls < 2; ++cls) {
    EXPECT_EQ(mask.count(cls), 16u);
  }
}

TEST(ApplyThresholds, ExactThresholdValueStaysUnset) {
  const SoftMask soft = uniform_soft(4, 4, 1, 0.5f);
  const MultiLabelMask mask =
      apply_thresholds(soft, std::vector<float>{0.5f});
  EXPECT_EQ(mask.count(0), 0u);
}

TEST(ApplyThresholds, PerClassThresholdsIndependent) {
  const SoftMask soft = uniform_soft(2, 2, 2, 0.5f);
  const MultiLabelMask mask =
      apply_thresholds(soft, std::vector<float>{0.3f, 0.7f});
  EXPECT_EQ(mask.count(0), 4u);
  EXPECT_EQ(mask.count(1), 0u);
}

TEST(ApplyThresholds, RejectsBadInputs) {
  const SoftMask soft = uniform_soft(2, 2, 2, 0.5f);
  EXPECT_EQ(code_of([&] {
              apply_thresholds(soft, std::vector<float>{0.5f});
            }),
            Errc::dimension_mismatch);
  EXPECT_EQ(code_of([&] {
              apply_thresholds(soft, std::vector<float>{0.5f, 1.0f});
            }),
            Errc::invalid_spec);
}

TEST(ApplyThresholds, RaisingThresholdNeverAddsPixels) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (int trial = 0; trial < 50; ++trial) {
    SoftMask soft = SoftMask::zeros(8, 8, 2);
    for (float& v : soft.values) v = dist(rng);
    std::uint64_t prev[2] = {65, 65};
    for (const float t : {0.1f, 0.3f, 0.5f, 0.7f, 0.9f}) {
      const MultiLabelMask mask =
          apply_thresholds(soft, std::vector<float>{t, t});
      for (std::uint16_t cls = 0; cls < 2; ++cls) {
        EXPECT_LE(mask.count(cls), prev[cls]);
        prev[cls] = mask.count(cls);
      }
    }
  }
}

TEST(IoUReport, IdenticalMasksScoreOne) {
  const MultiLabelMask mask = random_mask(8, 8, 3, 7);
  IoUReport report(3);
  report.accumulate(mask, mask);
  EXPECT_EQ(report.miou(), 1.0);
}

TEST(IoUReport, DisjointMasksScoreZero) {
  MultiLabelMask pred = MultiLabelMask::empty(4, 4, 1);
  MultiLabelMask gt = MultiLabelMask::empty(4, 4, 1);
  pred.set(0, 0, 0, true);
  gt.set(3, 3, 0, true);
  IoUReport report(1);
  report.accumulate(pred, gt);
  EXPECT_EQ(*report.class_iou(0), 0.0);
}

TEST(IoUReport, HandComputedFourTwelfths) {
  // pred = left two columns (8 px), gt = top two rows (8 px), overlap 4.
  MultiLabelMask pred = MultiLabelMask::empty(4, 4, 1);
  MultiLabelMask gt = MultiLabelMask::empty(4, 4, 1);
  for (std::uint32_t r = 0; r < 4; ++r) {
    pred.set(r, 0, 0, true);
    pred.set(r, 1, 0, true);
  }
  for (std::uint32_t c = 0; c < 4; ++c) {
    gt.set(0, c, 0, true);
    gt.set(1, c, 0, true);
  }
  IoUReport report(1);
  report.accumulate(pred, gt);
  EXPECT_EQ(report.intersection[0], 4u);
  EXPECT_EQ(report.union_count[0], 12u);
  EXPECT_NEAR(*report.class_iou(0), 4.0 / 12.0, 1e-12);
}

TEST(IoUReport, IoUIsSymmetric) {
  const MultiLabelMask a = random_mask(16, 16, 2, 8);
  const MultiLabelMask b = random_mask(16, 16, 2, 9);
  IoUReport ab(2);
  IoUReport ba(2);
  ab.accumulate(a, b);
  ba.accumulate(b, a);
  EXPECT_EQ(ab, ba);
}

TEST(IoUReport, ZeroUnionClassesExcludedFromMean) {
  MultiLabelMask pred = MultiLabelMask::empty(4, 4, 3);
  MultiLabelMask gt = MultiLabelMask::empty(4, 4, 3);
  // Class 0: IoU 0.4 (2 of 5); class 1: IoU 0.6 (3 of 5); class 2 absent.
  for (std::uint32_t c = 0; c < 5; ++c) gt.set(0, c % 4, 0, true);
  gt.set(1, 0, 0, true);  // gt class 0: 5 px
  pred.set(0, 0, 0, true);
  pred.set(0, 1, 0, true);
  // gt0 = {(0,0),(0,1),(0,2),(0,3),(1,0)}; pred0 = {(0,0),(0,1)}; I=2, U=5.
  for (std::uint32_t c = 0; c < 3; ++c) {
    gt.set(2, c, 1, true);
    pred.set(2, c, 1, true);
  }
  pred.set(2, 3, 1, true);
  gt.set(3, 0, 1, true);
  // gt1 = {(2,0),(2,1),(2,2),(3,0)}; pred1 = {(2,0),(2,1),(2,2),(2,3)}; I=3, U=5.
  IoUReport report(3);
  report.accumulate(pred, gt);
  EXPECT_FALSE(report.class_iou(2).has_value());
  EXPECT_NEAR(report.miou(), (2.0 / 5.0 + 3.0 / 5.0) / 2.0, 1e-12);
}

TEST(IoUReport, SingleClassDegenerate) {
  const MultiLabelMask mask = random_mask(8, 8, 1, 10);
  IoUReport report(1);
  report.accumulate(mask, mask);
  EXPECT_EQ(report.miou(), *report.class_iou(0));
}

TEST(IoUReport, AllUnionsZeroIsUndefined) {
  const MultiLabelMask empty = MultiLabelMask::empty(4, 4, 2);
  IoUReport report(2);
  report.accumulate(empty, empty);
  EXPECT_EQ(code_of([&] { report.miou(); }), Errc::undefined_metric);
}

TEST(IoUReport, MergeEqualsSequentialAccumulation) {
  std::mt19937_64 seeds(11);
  std::vector<MultiLabelMask> preds;
  std::vector<MultiLabelMask> gts;
  for (int i = 0; i < 6; ++i) {
    preds.push_back(random_mask(16, 16, 3, seeds()));
    gts.push_back(random_mask(16, 16, 3, seeds()));
  }
  IoUReport sequential(3);
  for (int i = 0; i < 6; ++i) sequential.accumulate(preds[i], gts[i]);
  // Two halves merged.
  IoUReport left(3);
  IoUReport right(3);
  for (int i = 0; i < 3; ++i) left.accumulate(preds[i], gts[i]);
  for (int i = 3; i < 6; ++i) right.accumulate(preds[i], gts[i]);
  left.merge(right);
  EXPECT_EQ(left, sequential);
  EXPECT_EQ(left.miou(), sequential.miou());
}

TEST(IoUReport, MicroAggregationEqualsConcatenation) {
  // Accumulating two images equals one report over their concatenation.
  const MultiLabelMask p1 = random_mask(8, 8, 2, 20);
  const MultiLabelMask g1 = random_mask(8, 8, 2, 21);
  const MultiLabelMask p2 = random_mask(8, 8, 2, 22);
  const MultiLabelMask g2 = random_mask(8, 8, 2, 23);
  IoUReport two(2);
  two.accumulate(p1, g1);
  two.accumulate(p2, g2);
  // Concatenate vertically.
  MultiLabelMask pc = MultiLabelMask::empty(16, 8, 2);
  MultiLabelMask gc = MultiLabelMask::empty(16, 8, 2);
  for (std::uint32_t r = 0; r < 8; ++r) {
    for (std::uint32_t c = 0; c < 8; ++c) {
      for (std::uint16_t cls = 0; cls < 2; ++cls) {
        pc.set(r, c, cls, p1.get(r, c, cls));
        pc.set(r + 8, c, cls, p2.get(r, c, cls));
        gc.set(r, c, cls, g1.get(r, c, cls));
        gc.set(r + 8, c, cls, g2.get(r, c, cls));
      }
    }
  }
  IoUReport one(2);
  one.accumulate(pc, gc);
  EXPECT_EQ(one, two);
}

TEST(IoUReport, JsonCarriesExactCounts) {
  MultiLabelMask pred = MultiLabelMask::empty(4, 4, 2);
  MultiLabelMask gt = MultiLabelMask::empty(4, 4, 2);
  pred.set(0, 0, 0, true);
  gt.set(0, 0, 0, true);
  gt.set(0, 1, 0, true);
  IoUReport report(2);
  report.accumulate(pred, gt);
  const std::string json = report.to_json();
  EXPECT_NE(json.find("\"intersection\": 1"), std::string::npos);
  EXPECT_NE(json.find("\"union\": 2"), std::string::npos);
  EXPECT_NE(json.find("\"iou\": null"), std::string::npos);  // class 1
}

TEST(MacroAggregation, AveragesPerImageIoUs) {
  MultiLabelMask gt = MultiLabelMask::empty(2, 2, 1);
  gt.set(0, 0, 0, true);
  gt.set(0, 1, 0, true);
  MultiLabelMask half = MultiLabelMask::empty(2, 2, 1);
  half.set(0, 0, 0, true);  // IoU 1/2
  MacroIoUAccumulator macro(1);
  macro.add_image(gt, gt);    // IoU 1
  macro.add_image(half, gt);  // IoU 0.5
  EXPECT_NEAR(macro.miou(), 0.75, 1e-12);
}

TEST(ClassFrequency, UniformFullPlanes) {
  MultiLabelMask mask = MultiLabelMask::empty(4, 4, 4);
  for (std::uint32_t r = 0; r < 4; ++r) {
    for (std::uint32_t c = 0; c < 4; ++c) {
      for (std::uint16_t cls = 0; cls < 4; ++cls) mask.set(r, c, cls, true);
    }
  }
  const auto freq = class_frequency(std::vector<MultiLabelMask>{mask});
  for (const double f : freq) EXPECT_NEAR(f, 0.25, 1e-12);
}

TEST(ClassFrequency, SingleClassTakesAll) {
  MultiLabelMask mask = MultiLabelMask::empty(4, 4, 3);
  mask.set(1, 1, 1, true);
  const auto freq = class_frequency(std::vector<MultiLabelMask>{mask});
  EXPECT_EQ(freq[0], 0.0);
  EXPECT_EQ(freq[1], 1.0);
  EXPECT_EQ(freq[2], 0.0);
}

TEST(ClassFrequency, ErrorVariants) {
  EXPECT_EQ(code_of([] {
              class_frequency(std::vector<MultiLabelMask>{});
            }),
            Errc::insufficient_data);
  const MultiLabelMask empty = MultiLabelMask::empty(4, 4, 2);
  EXPECT_EQ(code_of([&] {
              class_frequency(std::vector<MultiLabelMask>{empty});
            }),
            Errc::undefined_statistics);
}

}  // namespace
}  // namespace aoiseg
