#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aoiseg/embed.hpp"
#include "aoiseg/raster.hpp"

namespace aoiseg {

/// Top-k retrieval result for one query, best first. Similarities are cosine
/// values clamped to [-1, 1]; ties are broken by lower bank index.
struct NeighborSet {
  std::vector<std::uint32_t> indices;
  std::vector<float> similarities;

  bool operator==(const NeighborSet&) const = default;
};

struct Provenance {
  std::uint32_t image = 0;  // index into the bank's image id table
  std::uint32_t patch_index = 0;

  bool operator==(const Provenance&) const = default;
};

/// Inverted-list coarse quantizer: seeded k-means centroids over the keys
/// plus per-centroid member lists (bank indices, ascending).
struct PartitionIndex {
  std::uint32_t nlist = 0;
  std::vector<float> centroids;             // nlist x d, unit rows
  std::vector<std::uint32_t> list_offsets;  // nlist + 1
  std::vector<std::uint32_t> entries;       // bank indices grouped by list

  bool operator==(const PartitionIndex&) const = default;
};

/// Immutable key-value patch memory: M unit-norm d-dim keys paired with M
/// bit-packed P^2 x C value records. Built once via BankBuilder (plus an
/// optional build_partition_index call); afterwards it is safe to search from
/// any number of threads concurrently.
class MemoryBank {
 public:
  MemoryBank() = default;

  std::uint32_t size() const { return m_; }
  std::uint32_t dim() const { return d_; }
  std::uint32_t value_pixels() const { return value_pixels_; }
  std::uint16_t classes() const { return classes_; }
  std::size_t value_stride() const;

  std::span<const float> key(std::uint32_t j) const {
    return {keys_.data() + static_cast<std::size_t>(j) * d_, d_};
  }
  std::span<const std::uint8_t> value(std::uint32_t j) const;
  const std::string& image_id(std::uint32_t j) const {
    return image_ids_[provenance_[j].image];
  }
  std::uint32_t patch_index(std::uint32_t j) const {
    return provenance_[j].patch_index;
  }

  /// Exact top-k cosine retrieval for a batch of queries (nq = size / d
  /// rows). Queries are L2-normalized internally. Output order equals input
  /// order and is bitwise independent of the thread count.
  std::vector<NeighborSet> search_exact(std::span<const float> queries,
                                        std::uint32_t k,
                                        unsigned threads = 0) const;

  /// Scans only the nprobe partitions whose centroids are most similar to
  /// each query. With nprobe = nlist the output is identical to search_exact.
  /// A query may return fewer than k neighbors if the probed lists hold fewer
  /// entries.
  std::vector<NeighborSet> search_partitioned(std::span<const float> queries,
                                              std::uint32_t k,
                                              std::uint32_t nprobe,
                                              unsigned threads = 0) const;

  /// Seeded k-means over the keys (iteration cap 25). nlist = 0 picks
  /// ceil(sqrt(M)). Part of the single-writer build phase.
  void build_partition_index(std::uint32_t nlist = 0, std::uint64_t seed = 0,
                             unsigned threads = 0);

  bool has_partition_index() const { return partition_.has_value(); }
  const PartitionIndex& partition() const;

  /// Exact byte count of keys + bit-packed values + provenance under this
  /// layout (provenance = unique id bytes + 8 bytes per entry).
  std::uint64_t estimate_memory() const;

  void save(const std::string& path) const;
  static MemoryBank load(const std::string& path);

  bool operator==(const MemoryBank&) const = default;

 private:
  friend class BankBuilder;

  std::uint32_t m_ = 0;
  std::uint32_t d_ = 0;
  std::uint32_t value_pixels_ = 0;
  std::uint16_t classes_ = 0;
  std::vector<float> keys_;
  std::vector<std::uint8_t> values_;
  std::vector<std::string> image_ids_;
  std::vector<Provenance> provenance_;
  std::optional<PartitionIndex> partition_;
};

/// Single-writer accumulation of (embedding, value, provenance) entries.
/// Keys are validated and L2-normalized on add; values are stored verbatim.
class BankBuilder {
 public:
  BankBuilder(std::uint32_t dim, std::uint32_t value_pixels,
              std::uint16_t classes);

  /// Rejects non-finite and zero-norm embeddings (degenerate_key names the
  /// offending provenance).
  void add(std::span<const float> embedding,
           std::span<const std::uint8_t> value, std::string_view image_id,
           std::uint32_t patch_index);

  /// Adds every patch of a labeled image. Patches whose embedding has zero
  /// norm (the toy encoder emits these for all-black patches) carry no signal
  /// under cosine similarity and are skipped; the skip count is returned.
  std::uint32_t add_image(const PatchEmbeddingSet& embeddings,
                          const MultiLabelMask& mask,
                          const PatchGridSpec& spec);

  std::uint32_t size() const { return static_cast<std::uint32_t>(count_); }

  MemoryBank build() &&;

 private:
  std::uint32_t intern_id(std::string_view id);

  std::uint32_t d_;
  std::uint32_t value_pixels_;
  std::uint16_t classes_;
  std::size_t count_ = 0;
  MemoryBank bank_;
};

/// Packs a full mask into one value record (bit = pixel * C + cls, pixels
/// row-major), the H*W analog of a patch value.
std::vector<std::uint8_t> pack_mask_record(const MultiLabelMask& mask);

/// Image-level memory: global-embedding keys paired with full H x W x C
/// masks. A special case of the patch memory with P^2 replaced by H*W.
class ImageBank {
 public:
  ImageBank() = default;

  static ImageBank build(std::span<const PatchEmbeddingSet> images,
                         std::span<const MultiLabelMask> masks);

  std::uint32_t size() const { return core_.size(); }
  std::uint32_t dim() const { return core_.dim(); }
  std::uint32_t height() const { return height_; }
  std::uint32_t width() const { return width_; }
  std::uint16_t classes() const { return core_.classes(); }
  const MemoryBank& core() const { return core_; }

  NeighborSet search(std::span<const float> global_query,
                     std::uint32_t k) const;

  void save(const std::string& path) const { core_.save(path); }
  /// The AOIB file stores only H*W; the caller supplies the factorization.
  static ImageBank load(const std::string& path, std::uint32_t height,
                        std::uint32_t width);
  static ImageBank from_bank(MemoryBank bank, std::uint32_t height,
                             std::uint32_t width);

 private:
  MemoryBank core_;
  std::uint32_t height_ = 0;
  std::uint32_t width_ = 0;
};

}  // namespace aoiseg
