#include "aoiseg/membank.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <unordered_map>

#include "aoiseg/error.hpp"
#include "aoiseg/grid.hpp"
#include "aoiseg/io.hpp"
#include "aoiseg/kernels.hpp"
#include "aoiseg/parallel.hpp"

namespace aoiseg {

namespace {

inline bool better(float s1, std::uint32_t i1, float s2, std::uint32_t i2) {
  return s1 > s2 || (s1 == s2 && i1 < i2);
}

// Bounded selection under the total order (similarity desc, index asc). The
// kept set is independent of offer order, so results do not depend on scan
// tiling or thread partitioning.
class TopK {
 public:
  explicit TopK(std::uint32_t k) : k_(k) { heap_.reserve(k); }

  void offer(float sim, std::uint32_t idx) {
    if (heap_.size() < k_) {
      heap_.push_back({sim, idx});
      sift_up(heap_.size() - 1);
      return;
    }
    Candidate& root = heap_[0];
    if (better(sim, idx, root.sim, root.idx)) {
      root = {sim, idx};
      sift_down();
    }
  }

  NeighborSet take() {
    std::sort(heap_.begin(), heap_.end(), [](const Candidate& a,
                                             const Candidate& b) {
      return better(a.sim, a.idx, b.sim, b.idx);
    });
    NeighborSet out;
    out.indices.reserve(heap_.size());
    out.similarities.reserve(heap_.size());
    for (const auto& c : heap_) {
      out.indices.push_back(c.idx);
      out.similarities.push_back(c.sim);
    }
    return out;
  }

 private:
  struct Candidate {
    float sim;
    std::uint32_t idx;
  };

  // Root is the worst kept candidate.
  static bool worse(const Candidate& a, const Candidate& b) {
    return better(b.sim, b.idx, a.sim, a.idx);
  }

  void sift_up(std::size_t i) {
    while (i > 0) {
      const std::size_t p = (i - 1) / 2;
      if (!worse(heap_[i], heap_[p])) break;
      std::swap(heap_[i], heap_[p]);
      i = p;
    }
  }

  void sift_down() {
    std::size_t i = 0;
    for (;;) {
      const std::size_t l = 2 * i + 1;
      const std::size_t r = l + 1;
      std::size_t w = i;
      if (l < heap_.size() && worse(heap_[l], heap_[w])) w = l;
      if (r < heap_.size() && worse(heap_[r], heap_[w])) w = r;
      if (w == i) break;
      std::swap(heap_[i], heap_[w]);
      i = w;
    }
  }

  std::uint32_t k_;
  std::vector<Candidate> heap_;
};

inline float clamp_sim(double v) {
  if (v > 1.0) v = 1.0;
  if (v < -1.0) v = -1.0;
  return static_cast<float>(v);
}

struct NormalizedQueries {
  std::size_t count = 0;
  std::vector<float> f32;
  std::vector<double> f64;
};

NormalizedQueries normalize_queries(std::span<const float> queries,
                                    std::uint32_t d, const char* what) {
  if (d == 0 || queries.size() % d != 0) {
    fail(Errc::dimension_mismatch,
         std::string(what) + ": query buffer of " +
             std::to_string(queries.size()) + " floats is not a multiple of d=" +
             std::to_string(d));
  }
  NormalizedQueries out;
  out.count = queries.size() / d;
  out.f32.resize(queries.size());
  out.f64.resize(queries.size());
  for (std::size_t q = 0; q < out.count; ++q) {
    const float* src = queries.data() + q * d;
    for (std::uint32_t i = 0; i < d; ++i) {
      if (!std::isfinite(src[i])) {
        fail(Errc::non_finite_value,
             std::string(what) + ": query " + std::to_string(q) +
                 " contains NaN or Inf");
      }
    }
    const double norm2 = detail::l2_norm_sq(src, d);
    if (norm2 == 0.0) {
      fail(Errc::degenerate_query, std::string(what) + ": query " +
                                       std::to_string(q) + " has zero norm");
    }
    const double inv = 1.0 / std::sqrt(norm2);
    float* dstf = out.f32.data() + q * d;
    double* dstd = out.f64.data() + q * d;
    for (std::uint32_t i = 0; i < d; ++i) {
      dstf[i] = static_cast<float>(src[i] * inv);
      dstd[i] = static_cast<double>(dstf[i]);
    }
  }
  return out;
}

// Exhaustive scan of rows [0, nrows) for the query range [qbegin, qend),
// tiled so a block of rows stays cache-resident while four queries share each
// row load. heaps[qi - qbegin] receives the candidates.
void exact_scan(const float* rows, std::size_t nrows, std::uint32_t d,
                const std::vector<double>& q64, std::size_t qbegin,
                std::size_t qend, std::vector<TopK>& heaps) {
  constexpr std::size_t kTileRows = 512;
  for (std::size_t row0 = 0; row0 < nrows; row0 += kTileRows) {
    const std::size_t row1 = std::min(nrows, row0 + kTileRows);
    std::size_t qi = qbegin;
    for (; qi + 8 <= qend; qi += 8) {
      const double* q = q64.data() + qi * d;
      for (std::size_t j = row0; j < row1; ++j) {
        double dots[8];
        detail::dot_q8(rows + j * d, q, d, d, dots);
        for (int t = 0; t < 8; ++t) {
          heaps[qi - qbegin + t].offer(clamp_sim(dots[t]),
                                       static_cast<std::uint32_t>(j));
        }
      }
    }
    for (; qi + 4 <= qend; qi += 4) {
      const double* q = q64.data() + qi * d;
      for (std::size_t j = row0; j < row1; ++j) {
        double dots[4];
        detail::dot_q4(rows + j * d, q, d, d, dots);
        for (int t = 0; t < 4; ++t) {
          heaps[qi - qbegin + t].offer(clamp_sim(dots[t]),
                                       static_cast<std::uint32_t>(j));
        }
      }
    }
    for (; qi < qend; ++qi) {
      const double* q = q64.data() + qi * d;
      for (std::size_t j = row0; j < row1; ++j) {
        heaps[qi - qbegin].offer(clamp_sim(detail::dot(rows + j * d, q, d)),
                                 static_cast<std::uint32_t>(j));
      }
    }
  }
}

// Scan an index list of gathered rows for one query.
void gathered_scan(const float* rows, std::uint32_t d, const double* q,
                   const std::uint32_t* ids, std::size_t n, TopK& heap) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    double dots[4];
    detail::dot_r4(rows + static_cast<std::size_t>(ids[i]) * d,
                   rows + static_cast<std::size_t>(ids[i + 1]) * d,
                   rows + static_cast<std::size_t>(ids[i + 2]) * d,
                   rows + static_cast<std::size_t>(ids[i + 3]) * d, q, d,
                   dots);
    for (int t = 0; t < 4; ++t) {
      heap.offer(clamp_sim(dots[t]), ids[i + t]);
    }
  }
  for (; i < n; ++i) {
    heap.offer(clamp_sim(
                   detail::dot(rows + static_cast<std::size_t>(ids[i]) * d, q, d)),
               ids[i]);
  }
}

}  // namespace

std::size_t MemoryBank::value_stride() const {
  return patch_value_stride(value_pixels_, classes_);
}

std::span<const std::uint8_t> MemoryBank::value(std::uint32_t j) const {
  const std::size_t stride = value_stride();
  return {values_.data() + static_cast<std::size_t>(j) * stride, stride};
}

const PartitionIndex& MemoryBank::partition() const {
  if (!partition_) {
    fail(Errc::not_indexed, "bank has no partition index");
  }
  return *partition_;
}

std::vector<NeighborSet> MemoryBank::search_exact(
    std::span<const float> queries, std::uint32_t k, unsigned threads) const {
  if (m_ == 0) {
    fail(Errc::empty_bank, "search on an empty bank");
  }
  if (k == 0) {
    fail(Errc::insufficient_entries, "k must be >= 1");
  }
  if (k > m_) {
    fail(Errc::insufficient_entries,
         "k=" + std::to_string(k) + " exceeds bank size M=" +
             std::to_string(m_));
  }
  const auto nq = normalize_queries(queries, d_, "search_exact");
  std::vector<NeighborSet> results(nq.count);
  parallel_for(nq.count, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<TopK> heaps;
    heaps.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) heaps.emplace_back(k);
    exact_scan(keys_.data(), m_, d_, nq.f64, begin, end, heaps);
    for (std::size_t i = begin; i < end; ++i) {
      results[i] = heaps[i - begin].take();
    }
  });
  return results;
}

std::vector<NeighborSet> MemoryBank::search_partitioned(
    std::span<const float> queries, std::uint32_t k, std::uint32_t nprobe,
    unsigned threads) const {
  if (!partition_) {
    fail(Errc::not_indexed, "search_partitioned requires a partition index");
  }
  if (m_ == 0) {
    fail(Errc::empty_bank, "search on an empty bank");
  }
  if (k == 0) {
    fail(Errc::insufficient_entries, "k must be >= 1");
  }
  if (k > m_) {
    fail(Errc::insufficient_entries,
         "k=" + std::to_string(k) + " exceeds bank size M=" +
             std::to_string(m_));
  }
  const PartitionIndex& part = *partition_;
  if (nprobe < 1 || nprobe > part.nlist) {
    fail(Errc::invalid_spec, "nprobe must be in [1, nlist=" +
                                 std::to_string(part.nlist) + "], got " +
                                 std::to_string(nprobe));
  }
  const auto nq = normalize_queries(queries, d_, "search_partitioned");
  std::vector<NeighborSet> results(nq.count);
  parallel_for(nq.count, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t qi = begin; qi < end; ++qi) {
      const double* q = nq.f64.data() + qi * d_;
      std::vector<TopK> one;
      one.emplace_back(nprobe);
      exact_scan(part.centroids.data(), part.nlist, d_, nq.f64, qi, qi + 1,
                 one);
      const NeighborSet probes = one[0].take();
      TopK heap(k);
      for (const std::uint32_t c : probes.indices) {
        const std::uint32_t* ids = part.entries.data() + part.list_offsets[c];
        const std::size_t n = part.list_offsets[c + 1] - part.list_offsets[c];
        gathered_scan(keys_.data(), d_, q, ids, n, heap);
      }
      results[qi] = heap.take();
    }
  });
  return results;
}

void MemoryBank::build_partition_index(std::uint32_t nlist, std::uint64_t seed,
                                       unsigned threads) {
  if (m_ == 0) {
    fail(Errc::empty_bank, "cannot build a partition index on an empty bank");
  }
  if (nlist == 0) {
    nlist = static_cast<std::uint32_t>(
        std::ceil(std::sqrt(static_cast<double>(m_))));
  }
  nlist = std::min(nlist, m_);

  // Seeded initialization: distinct keys via partial Fisher-Yates.
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> perm(m_);
  std::iota(perm.begin(), perm.end(), 0u);
  for (std::uint32_t i = 0; i < nlist; ++i) {
    const std::uint32_t j =
        i + static_cast<std::uint32_t>(rng() % (m_ - i));
    std::swap(perm[i], perm[j]);
  }
  std::vector<float> centroids(static_cast<std::size_t>(nlist) * d_);
  for (std::uint32_t c = 0; c < nlist; ++c) {
    std::memcpy(centroids.data() + static_cast<std::size_t>(c) * d_,
                key(perm[c]).data(), d_ * sizeof(float));
  }

  std::vector<std::uint32_t> assign(m_, 0);
  std::vector<float> best_sim(m_, 0.0f);

  // Assignment runs keys through the same normalize-then-dot path queries
  // use, so a query equal to a stored key ranks centroids identically.
  auto assign_pass = [&]() {
    parallel_for(m_, threads, [&](std::size_t begin, std::size_t end) {
      constexpr std::size_t kChunk = 1024;
      for (std::size_t c0 = begin; c0 < end; c0 += kChunk) {
        const std::size_t c1 = std::min(end, c0 + kChunk);
        const std::span<const float> chunk(
            keys_.data() + c0 * d_, (c1 - c0) * d_);
        const auto nq = normalize_queries(chunk, d_, "kmeans");
        std::vector<TopK> heaps;
        heaps.reserve(c1 - c0);
        for (std::size_t i = c0; i < c1; ++i) heaps.emplace_back(1);
        exact_scan(centroids.data(), nlist, d_, nq.f64, 0, c1 - c0, heaps);
        for (std::size_t i = c0; i < c1; ++i) {
          const NeighborSet top = heaps[i - c0].take();
          assign[i] = top.indices[0];
          best_sim[i] = top.similarities[0];
        }
      }
    });
  };

  constexpr int kIterCap = 25;
  std::vector<std::uint32_t> prev;
  for (int iter = 0; iter < kIterCap; ++iter) {
    assign_pass();
    if (iter > 0 && assign == prev) break;
    prev = assign;

    std::vector<double> sums(static_cast<std::size_t>(nlist) * d_, 0.0);
    std::vector<std::uint32_t> counts(nlist, 0);
    for (std::uint32_t j = 0; j < m_; ++j) {
      const std::uint32_t c = assign[j];
      ++counts[c];
      const float* kj = keys_.data() + static_cast<std::size_t>(j) * d_;
      double* s = sums.data() + static_cast<std::size_t>(c) * d_;
      for (std::uint32_t i = 0; i < d_; ++i) s[i] += kj[i];
    }
    std::vector<bool> stolen(m_, false);
    for (std::uint32_t c = 0; c < nlist; ++c) {
      const double* s = sums.data() + static_cast<std::size_t>(c) * d_;
      double norm2 = 0.0;
      for (std::uint32_t i = 0; i < d_; ++i) norm2 += s[i] * s[i];
      float* dst = centroids.data() + static_cast<std::size_t>(c) * d_;
      if (counts[c] > 0 && norm2 > 0.0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (std::uint32_t i = 0; i < d_; ++i) {
          dst[i] = static_cast<float>(s[i] * inv);
        }
      } else {
        // Empty cluster: re-seed to the key that fits its current centroid
        // worst (lowest similarity, ties by lower index).
        std::uint32_t pick = 0;
        bool found = false;
        for (std::uint32_t j = 0; j < m_; ++j) {
          if (stolen[j]) continue;
          if (!found || best_sim[j] < best_sim[pick]) {
            pick = j;
            found = true;
          }
        }
        stolen[pick] = true;
        std::memcpy(dst, key(pick).data(), d_ * sizeof(float));
      }
    }
  }
  // Lists must reflect membership under the final centroids.
  assign_pass();

  PartitionIndex part;
  part.nlist = nlist;
  part.centroids = std::move(centroids);
  part.list_offsets.assign(nlist + 1, 0);
  for (std::uint32_t j = 0; j < m_; ++j) {
    ++part.list_offsets[assign[j] + 1];
  }
  for (std::uint32_t c = 0; c < nlist; ++c) {
    part.list_offsets[c + 1] += part.list_offsets[c];
  }
  part.entries.resize(m_);
  std::vector<std::uint32_t> cursor(part.list_offsets.begin(),
                                    part.list_offsets.end() - 1);
  for (std::uint32_t j = 0; j < m_; ++j) {
    part.entries[cursor[assign[j]]++] = j;
  }
  partition_ = std::move(part);
}

std::uint64_t MemoryBank::estimate_memory() const {
  std::uint64_t bytes = 0;
  bytes += static_cast<std::uint64_t>(m_) * d_ * sizeof(float);
  bytes += static_cast<std::uint64_t>(m_) * value_stride();
  for (const auto& id : image_ids_) bytes += id.size();
  bytes += static_cast<std::uint64_t>(m_) * (2 * sizeof(std::uint32_t));
  return bytes;
}

void MemoryBank::save(const std::string& path) const {
  detail::ByteWriter payload;
  payload.raw(keys_.data(), keys_.size() * sizeof(float));
  payload.raw(values_.data(), values_.size());
  payload.u32(static_cast<std::uint32_t>(image_ids_.size()));
  for (const auto& id : image_ids_) {
    payload.u16(static_cast<std::uint16_t>(id.size()));
    payload.raw(id.data(), id.size());
  }
  for (const auto& p : provenance_) {
    payload.u32(p.image);
    payload.u32(p.patch_index);
  }
  if (partition_) {
    payload.u32(partition_->nlist);
    payload.raw(partition_->centroids.data(),
                partition_->centroids.size() * sizeof(float));
    for (std::uint32_t c = 0; c < partition_->nlist; ++c) {
      const std::uint32_t len =
          partition_->list_offsets[c + 1] - partition_->list_offsets[c];
      payload.u32(len);
      payload.raw(partition_->entries.data() + partition_->list_offsets[c],
                  len * sizeof(std::uint32_t));
    }
  }

  detail::ByteWriter w;
  w.raw("AOIB", 4);
  w.u16(1);
  w.u32(m_);
  w.u32(d_);
  w.u32(value_pixels_);
  w.u16(classes_);
  w.u8(partition_ ? 1 : 0);
  w.u32(detail::crc32_of(payload.bytes().data(), payload.bytes().size()));
  w.raw(payload.bytes().data(), payload.bytes().size());
  detail::write_file(path, w.bytes());
}

MemoryBank MemoryBank::load(const std::string& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes.data(), bytes.size(), "AOIB " + path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "AOIB", 4) != 0) {
    fail(Errc::format_error, "AOIB " + path + ": bad magic");
  }
  if (r.u16() != 1) {
    fail(Errc::format_error, "AOIB " + path + ": unsupported version");
  }
  MemoryBank bank;
  bank.m_ = r.u32();
  bank.d_ = r.u32();
  bank.value_pixels_ = r.u32();
  bank.classes_ = r.u16();
  const std::uint8_t has_partition = r.u8();
  const std::uint32_t stored_crc = r.u32();
  if (bank.d_ < 1 || bank.classes_ < 1) {
    fail(Errc::format_error, "AOIB " + path + ": degenerate header");
  }

  const std::size_t header = bytes.size() - r.remaining();
  const std::uint8_t* payload = bytes.data() + header;
  const std::size_t payload_size = bytes.size() - header;
  if (detail::crc32_of(payload, payload_size) != stored_crc) {
    fail(Errc::checksum_mismatch, "AOIB " + path + ": payload CRC mismatch");
  }

  detail::ByteReader pr(payload, payload_size, "AOIB " + path + " payload");
  bank.keys_.resize(static_cast<std::size_t>(bank.m_) * bank.d_);
  pr.raw(bank.keys_.data(), bank.keys_.size() * sizeof(float));
  for (const float v : bank.keys_) {
    if (!std::isfinite(v)) {
      fail(Errc::non_finite_value, "AOIB " + path + ": NaN or Inf key");
    }
  }
  bank.values_.resize(static_cast<std::size_t>(bank.m_) *
                      bank.value_stride());
  pr.raw(bank.values_.data(), bank.values_.size());
  const std::uint32_t id_count = pr.u32();
  bank.image_ids_.resize(id_count);
  for (auto& id : bank.image_ids_) {
    id.resize(pr.u16());
    pr.raw(id.data(), id.size());
  }
  bank.provenance_.resize(bank.m_);
  for (auto& p : bank.provenance_) {
    p.image = pr.u32();
    p.patch_index = pr.u32();
    if (p.image >= id_count && bank.m_ > 0) {
      fail(Errc::format_error,
           "AOIB " + path + ": provenance references missing image id");
    }
  }
  if (has_partition) {
    PartitionIndex part;
    part.nlist = pr.u32();
    if (part.nlist < 1) {
      fail(Errc::format_error, "AOIB " + path + ": empty partition index");
    }
    part.centroids.resize(static_cast<std::size_t>(part.nlist) * bank.d_);
    pr.raw(part.centroids.data(), part.centroids.size() * sizeof(float));
    part.list_offsets.assign(part.nlist + 1, 0);
    for (std::uint32_t c = 0; c < part.nlist; ++c) {
      const std::uint32_t len = pr.u32();
      part.list_offsets[c + 1] = part.list_offsets[c] + len;
      const std::size_t at = part.entries.size();
      part.entries.resize(at + len);
      pr.raw(part.entries.data() + at, len * sizeof(std::uint32_t));
    }
    if (part.entries.size() != bank.m_) {
      fail(Errc::format_error,
           "AOIB " + path + ": partition lists do not cover the bank");
    }
    for (const std::uint32_t e : part.entries) {
      if (e >= bank.m_) {
        fail(Errc::format_error,
             "AOIB " + path + ": partition entry out of range");
      }
    }
    bank.partition_ = std::move(part);
  }
  if (!pr.at_end()) {
    fail(Errc::format_error, "AOIB " + path + ": trailing bytes");
  }
  return bank;
}

BankBuilder::BankBuilder(std::uint32_t dim, std::uint32_t value_pixels,
                         std::uint16_t classes)
    : d_(dim), value_pixels_(value_pixels), classes_(classes) {
  if (dim < 1 || value_pixels < 1 || classes < 1) {
    fail(Errc::dimension_mismatch,
         "bank requires dim, value pixels, and classes >= 1");
  }
  bank_.d_ = dim;
  bank_.value_pixels_ = value_pixels;
  bank_.classes_ = classes;
}

std::uint32_t BankBuilder::intern_id(std::string_view id) {
  // Entries almost always arrive grouped by image, so check the newest id
  // before falling back to a full scan.
  if (!bank_.image_ids_.empty() && bank_.image_ids_.back() == id) {
    return static_cast<std::uint32_t>(bank_.image_ids_.size() - 1);
  }
  for (std::size_t i = 0; i < bank_.image_ids_.size(); ++i) {
    if (bank_.image_ids_[i] == id) return static_cast<std::uint32_t>(i);
  }
  bank_.image_ids_.emplace_back(id);
  return static_cast<std::uint32_t>(bank_.image_ids_.size() - 1);
}

void BankBuilder::add(std::span<const float> embedding,
                      std::span<const std::uint8_t> value,
                      std::string_view image_id, std::uint32_t patch_index) {
  if (embedding.size() != d_) {
    fail(Errc::dimension_mismatch,
         "embedding of " + std::to_string(embedding.size()) +
             " floats, bank expects d=" + std::to_string(d_));
  }
  const std::size_t stride = patch_value_stride(value_pixels_, classes_);
  if (value.size() != stride) {
    fail(Errc::dimension_mismatch,
         "value record of " + std::to_string(value.size()) +
             " bytes, bank expects " + std::to_string(stride));
  }
  for (const float v : embedding) {
    if (!std::isfinite(v)) {
      fail(Errc::non_finite_value,
           "embedding for image '" + std::string(image_id) + "' patch " +
               std::to_string(patch_index) + " contains NaN or Inf");
    }
  }
  const double norm2 = detail::l2_norm_sq(embedding.data(), d_);
  if (norm2 == 0.0) {
    fail(Errc::degenerate_key,
         "zero-norm embedding for image '" + std::string(image_id) +
             "' patch " + std::to_string(patch_index));
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (const float v : embedding) {
    bank_.keys_.push_back(static_cast<float>(v * inv));
  }
  bank_.values_.insert(bank_.values_.end(), value.begin(), value.end());
  bank_.provenance_.push_back({intern_id(image_id), patch_index});
  ++count_;
}

std::uint32_t BankBuilder::add_image(const PatchEmbeddingSet& embeddings,
                                     const MultiLabelMask& mask,
                                     const PatchGridSpec& spec) {
  if (embeddings.dim != d_) {
    fail(Errc::dimension_mismatch,
         "image '" + embeddings.image_id + "' has d=" +
             std::to_string(embeddings.dim) + ", bank expects " +
             std::to_string(d_));
  }
  if (embeddings.count != spec.patch_count()) {
    fail(Errc::dimension_mismatch,
         "image '" + embeddings.image_id + "' has L=" +
             std::to_string(embeddings.count) + ", grid expects " +
             std::to_string(spec.patch_count()));
  }
  if (mask.classes != classes_ ||
      spec.pixels_per_patch() != value_pixels_) {
    fail(Errc::dimension_mismatch,
         "mask geometry does not match bank value layout");
  }
  const auto records = patchify_mask(mask, spec);
  const std::size_t stride = patch_value_stride(value_pixels_, classes_);
  std::uint32_t skipped = 0;
  for (std::uint32_t i = 0; i < embeddings.count; ++i) {
    const auto emb = embeddings.patch(i);
    if (detail::l2_norm_sq(emb.data(), d_) == 0.0) {
      ++skipped;
      continue;
    }
    add(emb, {records.data() + i * stride, stride}, embeddings.image_id, i);
  }
  return skipped;
}

MemoryBank BankBuilder::build() && {
  bank_.m_ = static_cast<std::uint32_t>(count_);
  return std::move(bank_);
}

std::vector<std::uint8_t> pack_mask_record(const MultiLabelMask& mask) {
  const std::size_t pixels = mask.pixel_count();
  std::vector<std::uint8_t> out(patch_value_stride(
      static_cast<std::uint32_t>(pixels), mask.classes), 0);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::uint16_t cls = 0; cls < mask.classes; ++cls) {
      if (mask.get_index(p, cls)) {
        const std::size_t bit = p * mask.classes + cls;
        out[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
      }
    }
  }
  return out;
}

ImageBank ImageBank::build(std::span<const PatchEmbeddingSet> images,
                           std::span<const MultiLabelMask> masks) {
  if (images.size() != masks.size() || images.empty()) {
    fail(Errc::dimension_mismatch,
         "image bank needs matching, nonempty embedding and mask lists");
  }
  const std::uint32_t h = masks[0].height;
  const std::uint32_t w = masks[0].width;
  const std::uint16_t c = masks[0].classes;
  const std::uint32_t d = images[0].dim;
  BankBuilder builder(d, h * w, c);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (masks[i].height != h || masks[i].width != w ||
        masks[i].classes != c) {
      fail(Errc::dimension_mismatch,
           "mask " + std::to_string(i) + " geometry differs from the first");
    }
    if (!images[i].global_embedding) {
      fail(Errc::invalid_spec, "image '" + images[i].image_id +
                                   "' has no global embedding");
    }
    builder.add(*images[i].global_embedding, pack_mask_record(masks[i]),
                images[i].image_id, 0);
  }
  return from_bank(std::move(builder).build(), h, w);
}

NeighborSet ImageBank::search(std::span<const float> global_query,
                              std::uint32_t k) const {
  return core_.search_exact(global_query, k)[0];
}

ImageBank ImageBank::load(const std::string& path, std::uint32_t height,
                          std::uint32_t width) {
  return from_bank(MemoryBank::load(path), height, width);
}

ImageBank ImageBank::from_bank(MemoryBank bank, std::uint32_t height,
                               std::uint32_t width) {
  if (static_cast<std::uint64_t>(height) * width != bank.value_pixels()) {
    fail(Errc::dimension_mismatch,
         "bank stores " + std::to_string(bank.value_pixels()) +
             " value pixels; " + std::to_string(height) + "x" +
             std::to_string(width) + " was requested");
  }
  ImageBank ib;
  ib.core_ = std::move(bank);
  ib.height_ = height;
  ib.width_ = width;
  return ib;
}

}  // namespace aoiseg
