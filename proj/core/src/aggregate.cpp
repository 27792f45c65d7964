#include "aoiseg/aggregate.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "aoiseg/error.hpp"
#include "aoiseg/grid.hpp"
#include "aoiseg/kernels.hpp"
#include "aoiseg/parallel.hpp"

namespace aoiseg {

void RetrievalConfig::validate(std::uint16_t classes) const {
  if (k < 1) {
    fail(Errc::invalid_spec, "retrieval requires k >= 1");
  }
  if (mode == Aggregation::attention &&
      (!(beta > 0.0f) || !std::isfinite(beta))) {
    fail(Errc::invalid_temperature,
         "attention aggregation requires beta > 0, got " +
             std::to_string(beta));
  }
  if (search.partitioned && search.nprobe < 1) {
    fail(Errc::invalid_spec, "partitioned search requires nprobe >= 1");
  }
  if (!thresholds.empty()) {
    if (classes != 0 && thresholds.size() != classes) {
      fail(Errc::dimension_mismatch,
           "expected " + std::to_string(classes) + " thresholds, got " +
               std::to_string(thresholds.size()));
    }
    for (const float t : thresholds) {
      if (!(t > 0.0f) || !(t < 1.0f)) {
        fail(Errc::invalid_spec,
             "thresholds must lie in (0, 1), got " + std::to_string(t));
      }
    }
  }
}

std::vector<double> similarity_weights(std::span<const float> sims) {
  if (sims.empty()) {
    fail(Errc::empty_neighborhood, "no neighbors to combine");
  }
  std::vector<double> w(sims.size());
  double total = 0.0;
  for (std::size_t j = 0; j < sims.size(); ++j) {
    w[j] = sims[j] > 0.0f ? static_cast<double>(sims[j]) : 0.0;
    total += w[j];
  }
  if (total <= 0.0) {
    // All similarities non-positive: raw Eq.-5 normalization is ill-defined,
    // fall back to uniform mixing.
    const double u = 1.0 / static_cast<double>(sims.size());
    std::fill(w.begin(), w.end(), u);
    return w;
  }
  for (double& v : w) v /= total;
  return w;
}

std::vector<double> attention_weights(std::span<const float> sims,
                                      float beta) {
  if (sims.empty()) {
    fail(Errc::empty_neighborhood, "no neighbors to combine");
  }
  if (!(beta > 0.0f) || !std::isfinite(beta)) {
    fail(Errc::invalid_temperature,
         "beta must be positive and finite, got " + std::to_string(beta));
  }
  float smax = sims[0];
  for (const float s : sims) smax = std::max(smax, s);
  std::vector<double> w(sims.size());
  double total = 0.0;
  for (std::size_t j = 0; j < sims.size(); ++j) {
    w[j] = std::exp((static_cast<double>(sims[j]) - smax) /
                    static_cast<double>(beta));
    total += w[j];
  }
  for (double& v : w) v /= total;
  return w;
}

namespace {

void combine_with_weights(std::span<const double> weights,
                          std::span<const std::span<const std::uint8_t>> values,
                          std::uint32_t pixels, std::uint16_t classes,
                          float* out) {
  const std::size_t bits = static_cast<std::size_t>(pixels) * classes;
  const std::size_t stride = patch_value_stride(pixels, classes);
  thread_local std::vector<double> acc;
  acc.assign(bits, 0.0);
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const auto& rec = values[j];
    if (rec.size() != stride) {
      fail(Errc::dimension_mismatch,
           "value record " + std::to_string(j) + " has " +
               std::to_string(rec.size()) + " bytes, expected " +
               std::to_string(stride));
    }
    const double w = weights[j];
    for (std::size_t b = 0; b < stride; ++b) {
      std::uint8_t byte = rec[b];
      while (byte != 0) {
        const int bit = std::countr_zero(byte);
        byte &= static_cast<std::uint8_t>(byte - 1);
        const std::size_t idx = b * 8 + bit;
        if (idx < bits) acc[idx] += w;  // guard against stray tail bits
      }
    }
  }
  for (std::size_t i = 0; i < bits; ++i) {
    out[i] = static_cast<float>(std::clamp(acc[i], 0.0, 1.0));
  }
}

}  // namespace

void combine_similarity(std::span<const float> sims,
                        std::span<const std::span<const std::uint8_t>> values,
                        std::uint32_t pixels, std::uint16_t classes,
                        float* out) {
  if (sims.size() != values.size()) {
    fail(Errc::dimension_mismatch, "sims and values length mismatch");
  }
  const auto w = similarity_weights(sims);
  combine_with_weights(w, values, pixels, classes, out);
}

void combine_attention(std::span<const float> sims,
                       std::span<const std::span<const std::uint8_t>> values,
                       float beta, std::uint32_t pixels, std::uint16_t classes,
                       float* out) {
  if (sims.size() != values.size()) {
    fail(Errc::dimension_mismatch, "sims and values length mismatch");
  }
  const auto w = attention_weights(sims, beta);
  combine_with_weights(w, values, pixels, classes, out);
}

SoftMask segment_patch_level(const PatchEmbeddingSet& embeddings,
                             const PatchGridSpec& spec, const MemoryBank& bank,
                             const RetrievalConfig& cfg, unsigned threads) {
  cfg.validate(bank.classes());
  if (embeddings.dim != bank.dim()) {
    fail(Errc::dimension_mismatch,
         "query embeddings have d=" + std::to_string(embeddings.dim) +
             ", bank has d=" + std::to_string(bank.dim()));
  }
  if (embeddings.count != spec.patch_count()) {
    fail(Errc::dimension_mismatch,
         "embedding count " + std::to_string(embeddings.count) +
             " does not match grid L=" + std::to_string(spec.patch_count()));
  }
  if (bank.value_pixels() != spec.pixels_per_patch()) {
    fail(Errc::dimension_mismatch,
         "bank stores " + std::to_string(bank.value_pixels()) +
             "-pixel values, grid patches have " +
             std::to_string(spec.pixels_per_patch()));
  }

  const std::uint32_t L = embeddings.count;
  const std::uint32_t d = bank.dim();
  const std::uint16_t classes = bank.classes();
  const std::uint32_t pixels = bank.value_pixels();
  const std::size_t record_floats =
      static_cast<std::size_t>(pixels) * classes;

  // Gather patches with a defined direction; zero-norm patches predict empty.
  std::vector<std::uint32_t> live;
  live.reserve(L);
  for (std::uint32_t i = 0; i < L; ++i) {
    if (detail::l2_norm_sq(embeddings.patch(i).data(), d) != 0.0) {
      live.push_back(i);
    }
  }
  std::vector<float> patch_preds(record_floats * L, 0.0f);
  if (!live.empty()) {
    std::vector<float> queries(static_cast<std::size_t>(live.size()) * d);
    for (std::size_t q = 0; q < live.size(); ++q) {
      const auto e = embeddings.patch(live[q]);
      std::copy(e.begin(), e.end(), queries.begin() + q * d);
    }
    const std::vector<NeighborSet> neighbors =
        cfg.search.partitioned
            ? bank.search_partitioned(queries, cfg.k, cfg.search.nprobe,
                                      threads)
            : bank.search_exact(queries, cfg.k, threads);
    parallel_for(live.size(), threads, [&](std::size_t begin,
                                           std::size_t end) {
      std::vector<std::span<const std::uint8_t>> records;
      for (std::size_t q = begin; q < end; ++q) {
        const NeighborSet& ns = neighbors[q];
        if (ns.indices.empty()) continue;  // possible under tiny nprobe
        records.clear();
        for (const std::uint32_t j : ns.indices) {
          records.push_back(bank.value(j));
        }
        float* out = patch_preds.data() + record_floats * live[q];
        if (cfg.mode == Aggregation::similarity) {
          combine_similarity(ns.similarities, records, pixels, classes, out);
        } else {
          combine_attention(ns.similarities, records, cfg.beta, pixels,
                            classes, out);
        }
      }
    });
  }
  return reassemble(patch_preds, spec, classes);
}

SoftMask segment_image_level(std::span<const float> global_embedding,
                             const ImageBank& bank, std::uint32_t k,
                             unsigned threads) {
  (void)threads;
  const NeighborSet ns = bank.search(global_embedding, k);
  const auto weights = similarity_weights(ns.similarities);
  SoftMask out = SoftMask::zeros(bank.height(), bank.width(), bank.classes());
  std::vector<double> acc(out.values.size(), 0.0);
  const std::size_t stride = bank.core().value_stride();
  for (std::size_t j = 0; j < ns.indices.size(); ++j) {
    const auto rec = bank.core().value(ns.indices[j]);
    const double w = weights[j];
    for (std::size_t b = 0; b < stride; ++b) {
      std::uint8_t byte = rec[b];
      while (byte != 0) {
        const int bit = std::countr_zero(byte);
        byte &= static_cast<std::uint8_t>(byte - 1);
        const std::size_t idx = b * 8 + bit;
        if (idx < acc.size()) acc[idx] += w;
      }
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out.values[i] = static_cast<float>(std::clamp(acc[i], 0.0, 1.0));
  }
  return out;
}

}  // namespace aoiseg
