#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aoiseg/embed.hpp"
#include "aoiseg/membank.hpp"
#include "aoiseg/raster.hpp"

namespace aoiseg {

enum class Granularity { patch, image };
enum class Aggregation { similarity, attention };

struct SearchParams {
  bool partitioned = false;
  std::uint32_t nprobe = 1;
};

struct RetrievalConfig {
  Granularity granularity = Granularity::patch;
  std::uint32_t k = 1;
  Aggregation mode = Aggregation::similarity;
  float beta = 0.07f;             // attention temperature
  std::vector<float> thresholds;  // per class, each in (0, 1); may be empty
  SearchParams search;

  /// classes = 0 skips the threshold-count check.
  void validate(std::uint16_t classes = 0) const;
};

/// Similarity-based mixing weights: negatives are clamped to zero before
/// normalizing, and if no neighbor has positive similarity the weights fall
/// back to uniform 1/k. Always sums to 1.
std::vector<double> similarity_weights(std::span<const float> sims);

/// Attention-style mixing weights: softmax of sims / beta, max-subtracted for
/// stability.
std::vector<double> attention_weights(std::span<const float> sims, float beta);

/// Weighted sum of k bit-packed value records expanded to 0/1, written to
/// out[pixel * classes + cls]. values[j] must hold
/// patch_value_stride(pixels, classes) bytes.
void combine_similarity(std::span<const float> sims,
                        std::span<const std::span<const std::uint8_t>> values,
                        std::uint32_t pixels, std::uint16_t classes,
                        float* out);
void combine_attention(std::span<const float> sims,
                       std::span<const std::span<const std::uint8_t>> values,
                       float beta, std::uint32_t pixels, std::uint16_t classes,
                       float* out);

/// Full patch-level pipeline: per patch, top-k retrieval, label mixing per
/// cfg.mode, then spatial reassembly to an H x W x C soft mask. Thresholding
/// is a separate step (metrics::apply_thresholds). Patches whose embedding
/// has zero norm (the toy encoder emits these for all-black patches) have no
/// defined cosine similarity and produce an all-zero soft record.
SoftMask segment_patch_level(const PatchEmbeddingSet& embeddings,
                             const PatchGridSpec& spec, const MemoryBank& bank,
                             const RetrievalConfig& cfg, unsigned threads = 0);

/// Image-level special case: one global embedding retrieves k gallery images
/// and their full masks are blended with similarity weights.
SoftMask segment_image_level(std::span<const float> global_embedding,
                             const ImageBank& bank, std::uint32_t k,
                             unsigned threads = 0);

}  // namespace aoiseg
