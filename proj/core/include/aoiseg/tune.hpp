#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aoiseg/aggregate.hpp"
#include "aoiseg/embed.hpp"
#include "aoiseg/raster.hpp"

namespace aoiseg {

struct TuneSpec {
  std::vector<std::uint32_t> k_grid = {1, 3, 5, 10, 20};
  std::vector<float> threshold_grid = default_threshold_grid();
  std::vector<float> beta_grid = {0.02f, 0.07f, 0.2f, 1.0f};
  std::uint32_t folds = 5;
  std::uint64_t seed = 0;

  static std::vector<float> default_threshold_grid();  // 0.05..0.95 step 0.05
  void validate() const;
};

struct LabeledEmbeddings {
  PatchEmbeddingSet embeddings;
  MultiLabelMask mask;
};

struct TuneResult {
  struct Cell {
    std::uint32_t k = 0;
    std::optional<float> beta;
    std::vector<float> thresholds;   // per-class argmax at this (k, beta)
    std::vector<double> class_iou;   // mean CV IoU at those thresholds; NaN
                                     // when the class never occurred
    double miou = 0.0;
  };

  std::uint32_t best_k = 0;
  std::optional<float> best_beta;
  std::vector<float> best_thresholds;
  double best_miou = 0.0;
  std::vector<Cell> table;  // every (k, beta) combination, grids ascending

  std::string to_json() const;
};

/// Seeded shuffle then contiguous partition; the first n % folds folds get
/// the extra element. Deterministic per seed.
std::vector<std::vector<std::uint32_t>> kfold_split(std::uint32_t n,
                                                    std::uint32_t folds,
                                                    std::uint64_t seed);

/// Cross-validated grid search. k (and beta, in attention mode) are selected
/// globally by mean CV mIoU; thresholds are selected per class independently,
/// each maximizing that class's mean CV IoU at the chosen (k, beta). Soft
/// masks are computed once per (fold, k, beta); threshold sweeps reuse them.
/// Ties: smaller k, then lower thresholds, then lower beta.
TuneResult grid_search(std::span<const LabeledEmbeddings> images,
                       const PatchGridSpec& grid, const RetrievalConfig& base,
                       const TuneSpec& spec, unsigned threads = 0);

/// Nested-gallery study: banks are built from seeded-shuffled pool prefixes
/// of the given sizes and evaluated (micro mIoU) on the fixed eval set.
std::vector<std::pair<std::uint32_t, double>> scalability_curve(
    std::span<const LabeledEmbeddings> pool,
    std::span<const std::uint32_t> sizes,
    std::span<const LabeledEmbeddings> eval_set, const PatchGridSpec& grid,
    const RetrievalConfig& cfg, std::uint64_t seed, unsigned threads = 0);

}  // namespace aoiseg
