#include "aoiseg/embed.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "aoiseg/error.hpp"
#include "aoiseg/grid.hpp"
#include "aoiseg/io.hpp"
#include "aoiseg/kernels.hpp"
#include "aoiseg/parallel.hpp"

namespace aoiseg {

namespace {

// Uniform in [-1, 1) from raw mt19937_64 output. Avoids
// std::uniform_real_distribution, whose stream is implementation-defined.
inline double uniform_pm1(std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

}  // namespace

ToyEncoder::ToyEncoder(const ToyEncoderConfig& cfg) : cfg_(cfg) {
  if (cfg.dim < 1 || cfg.patch_size < 1) {
    fail(Errc::invalid_spec, "toy encoder requires dim >= 1 and P >= 1");
  }
  feature_dim_ = 2 * cfg.patch_size * cfg.patch_size + 4;
  projection_.resize(static_cast<std::size_t>(cfg.dim) * feature_dim_);
  std::mt19937_64 rng(cfg.seed);
  for (std::uint32_t r = 0; r < cfg.dim; ++r) {
    float* row = projection_.data() + static_cast<std::size_t>(r) * feature_dim_;
    for (std::uint32_t c = 0; c < feature_dim_; ++c) {
      row[c] = static_cast<float>(uniform_pm1(rng));
    }
    const double norm = std::sqrt(detail::l2_norm_sq(row, feature_dim_));
    const double inv = norm > 0.0 ? 1.0 / norm : 0.0;
    for (std::uint32_t c = 0; c < feature_dim_; ++c) {
      row[c] = static_cast<float>(row[c] * inv);
    }
  }
}

PatchEmbeddingSet ToyEncoder::encode(const Raster& img, std::string image_id,
                                     unsigned threads) const {
  if (img.channels != 2) {
    fail(Errc::dimension_mismatch,
         "toy encoder expects a 2-channel raster, got " +
             std::to_string(img.channels));
  }
  const auto spec =
      PatchGridSpec::from_image(img.height, img.width, cfg_.patch_size);
  const std::uint32_t p = cfg_.patch_size;
  const std::uint32_t pixels = p * p;
  const std::vector<float> patches = patchify(img, spec);
  const std::size_t patch_floats = static_cast<std::size_t>(pixels) * 2;

  PatchEmbeddingSet out;
  out.image_id = std::move(image_id);
  out.count = spec.patch_count();
  out.dim = cfg_.dim;
  out.patch_embeddings.resize(static_cast<std::size_t>(out.count) * cfg_.dim);

  parallel_for(out.count, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> feat(feature_dim_);
    for (std::size_t i = begin; i < end; ++i) {
      const float* px = patches.data() + i * patch_floats;
      double mean[2] = {0.0, 0.0};
      for (std::uint32_t j = 0; j < pixels; ++j) {
        feat[2 * j] = px[2 * j];
        feat[2 * j + 1] = px[2 * j + 1];
        mean[0] += px[2 * j];
        mean[1] += px[2 * j + 1];
      }
      mean[0] /= pixels;
      mean[1] /= pixels;
      double var[2] = {0.0, 0.0};
      for (std::uint32_t j = 0; j < pixels; ++j) {
        const double d0 = px[2 * j] - mean[0];
        const double d1 = px[2 * j + 1] - mean[1];
        var[0] += d0 * d0;
        var[1] += d1 * d1;
      }
      feat[patch_floats] = mean[0];
      feat[patch_floats + 1] = mean[1];
      feat[patch_floats + 2] = std::sqrt(var[0] / pixels);
      feat[patch_floats + 3] = std::sqrt(var[1] / pixels);

      float* e = out.patch_embeddings.data() + i * cfg_.dim;
      std::uint32_t r = 0;
      for (; r + 4 <= cfg_.dim; r += 4) {
        double dots[4];
        detail::dot_r4(projection_row(r).data(), projection_row(r + 1).data(),
                       projection_row(r + 2).data(),
                       projection_row(r + 3).data(), feat.data(), feature_dim_,
                       dots);
        for (int j = 0; j < 4; ++j) e[r + j] = static_cast<float>(dots[j]);
      }
      for (; r < cfg_.dim; ++r) {
        e[r] = static_cast<float>(
            detail::dot(projection_row(r).data(), feat.data(), feature_dim_));
      }
    }
  });

  std::vector<double> sum(cfg_.dim, 0.0);
  for (std::uint32_t i = 0; i < out.count; ++i) {
    const float* e = out.patch_embeddings.data() +
                     static_cast<std::size_t>(i) * cfg_.dim;
    for (std::uint32_t c = 0; c < cfg_.dim; ++c) sum[c] += e[c];
  }
  std::vector<float> global(cfg_.dim);
  for (std::uint32_t c = 0; c < cfg_.dim; ++c) {
    global[c] = static_cast<float>(sum[c] / out.count);
  }
  out.global_embedding = std::move(global);
  return out;
}

PatchEmbeddingSet toy_encode(const Raster& img, const ToyEncoderConfig& cfg,
                             std::string image_id, unsigned threads) {
  return ToyEncoder(cfg).encode(img, std::move(image_id), threads);
}

Raster channel_adapt(const Raster& img) {
  if (img.channels != 2) {
    fail(Errc::dimension_mismatch,
         "channel_adapt expects exactly 2 channels, got " +
             std::to_string(img.channels));
  }
  Raster out = Raster::zeros(img.height, img.width, 3);
  for (std::size_t px = 0; px < img.pixel_count(); ++px) {
    const float a = img.data[2 * px];
    const float b = img.data[2 * px + 1];
    out.data[3 * px] = a;
    out.data[3 * px + 1] = b;
    out.data[3 * px + 2] = (a + b) / 2.0f;
  }
  return out;
}

void save_embeddings(const std::string& path, const EmbeddingFile& file) {
  detail::ByteWriter w;
  w.raw("AOIE", 4);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(file.images.size()));
  w.u32(file.dim);
  w.u32(file.patch_size);
  for (const auto& set : file.images) {
    if (set.dim != file.dim) {
      fail(Errc::inconsistent_dimension,
           "image '" + set.image_id + "' has d=" + std::to_string(set.dim) +
               ", file header says d=" + std::to_string(file.dim));
    }
    if (set.patch_embeddings.size() !=
        static_cast<std::size_t>(set.count) * set.dim) {
      fail(Errc::dimension_mismatch,
           "image '" + set.image_id + "' embedding buffer size mismatch");
    }
    if (set.image_id.size() > 0xffff) {
      fail(Errc::invalid_spec, "image id longer than 65535 bytes");
    }
    w.u16(static_cast<std::uint16_t>(set.image_id.size()));
    w.raw(set.image_id.data(), set.image_id.size());
    w.u32(set.count);
    w.u8(set.global_embedding.has_value() ? 1 : 0);
    w.raw(set.patch_embeddings.data(),
          set.patch_embeddings.size() * sizeof(float));
    if (set.global_embedding) {
      if (set.global_embedding->size() != file.dim) {
        fail(Errc::inconsistent_dimension,
             "image '" + set.image_id + "' global embedding size mismatch");
      }
      w.raw(set.global_embedding->data(), file.dim * sizeof(float));
    }
  }
  detail::write_file(path, w.bytes());
}

EmbeddingFile load_embeddings(const std::string& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes.data(), bytes.size(), "AOIE " + path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "AOIE", 4) != 0) {
    fail(Errc::format_error, "AOIE " + path + ": bad magic");
  }
  if (r.u16() != 1) {
    fail(Errc::format_error, "AOIE " + path + ": unsupported version");
  }
  EmbeddingFile file;
  const std::uint32_t image_count = r.u32();
  file.dim = r.u32();
  file.patch_size = r.u32();
  if (file.dim < 1) {
    fail(Errc::inconsistent_dimension, "AOIE " + path + ": d must be >= 1");
  }
  file.images.reserve(image_count);
  for (std::uint32_t n = 0; n < image_count; ++n) {
    PatchEmbeddingSet set;
    const std::uint16_t id_len = r.u16();
    set.image_id.resize(id_len);
    r.raw(set.image_id.data(), id_len);
    set.count = r.u32();
    set.dim = file.dim;
    const std::uint8_t has_global = r.u8();
    if (has_global > 1) {
      fail(Errc::format_error,
           "AOIE " + path + ": invalid has_global flag for '" + set.image_id +
               "'");
    }
    set.patch_embeddings.resize(static_cast<std::size_t>(set.count) *
                                file.dim);
    r.raw(set.patch_embeddings.data(),
          set.patch_embeddings.size() * sizeof(float));
    if (has_global) {
      std::vector<float> g(file.dim);
      r.raw(g.data(), file.dim * sizeof(float));
      set.global_embedding = std::move(g);
    }
    for (const float v : set.patch_embeddings) {
      if (!std::isfinite(v)) {
        fail(Errc::non_finite_value,
             "AOIE " + path + ": NaN or Inf in '" + set.image_id + "'");
      }
    }
    if (set.global_embedding) {
      for (const float v : *set.global_embedding) {
        if (!std::isfinite(v)) {
          fail(Errc::non_finite_value,
               "AOIE " + path + ": NaN or Inf global in '" + set.image_id +
                   "'");
        }
      }
    }
    file.images.push_back(std::move(set));
  }
  if (!r.at_end()) {
    fail(Errc::format_error, "AOIE " + path + ": trailing bytes");
  }
  return file;
}

}  // namespace aoiseg
