#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aoiseg/raster.hpp"

namespace aoiseg {

/// Patch embeddings of one image: L rows of d floats in patch order, plus an
/// optional image-level (global) embedding. Embeddings are stored raw; L2
/// normalization happens when keys enter a memory bank.
struct PatchEmbeddingSet {
  std::string image_id;
  std::uint32_t count = 0;  // L
  std::uint32_t dim = 0;    // d
  std::vector<float> patch_embeddings;              // L x d
  std::optional<std::vector<float>> global_embedding;  // d

  std::span<const float> patch(std::uint32_t i) const {
    return {patch_embeddings.data() + static_cast<std::size_t>(i) * dim, dim};
  }
};

/// Seeded random-projection encoder. Per patch, the feature vector is
/// [flattened P*P*2 pixels, per-channel mean, per-channel std] (length
/// 2P^2 + 4, population std), multiplied by a dim x (2P^2 + 4) projection
/// whose rows are unit-norm uniform(-1, 1) draws from the seed. The global
/// embedding is the arithmetic mean of the patch embeddings. Identical
/// (image, config) pairs produce bit-identical output on any platform.
struct ToyEncoderConfig {
  std::uint64_t seed = 0;
  std::uint32_t dim = 384;
  std::uint32_t patch_size = 16;
};

class ToyEncoder {
 public:
  explicit ToyEncoder(const ToyEncoderConfig& cfg);

  PatchEmbeddingSet encode(const Raster& img, std::string image_id = {},
                           unsigned threads = 0) const;

  const ToyEncoderConfig& config() const { return cfg_; }
  std::uint32_t feature_dim() const { return feature_dim_; }
  std::span<const float> projection_row(std::uint32_t r) const {
    return {projection_.data() + static_cast<std::size_t>(r) * feature_dim_,
            feature_dim_};
  }

 private:
  ToyEncoderConfig cfg_;
  std::uint32_t feature_dim_ = 0;
  std::vector<float> projection_;  // dim x feature_dim, unit-norm rows
};

PatchEmbeddingSet toy_encode(const Raster& img, const ToyEncoderConfig& cfg,
                             std::string image_id = {}, unsigned threads = 0);

/// Appends a third channel equal to the per-pixel mean of the first two
/// (export shim for external RGB encoders).
Raster channel_adapt(const Raster& img);

// Embedding file "AOIE": 'A','O','I','E', u16 version=1, u32 image_count,
// u32 d, u32 P; then per image: u16 id_len + UTF-8 id, u32 L,
// u8 has_global, L*d little-endian f32, d f32 if has_global = 1.
struct EmbeddingFile {
  std::uint32_t dim = 0;
  std::uint32_t patch_size = 0;
  std::vector<PatchEmbeddingSet> images;
};

void save_embeddings(const std::string& path, const EmbeddingFile& file);
EmbeddingFile load_embeddings(const std::string& path);

}  // namespace aoiseg
