#include "aoiseg/grid.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "aoiseg/error.hpp"

namespace aoiseg {

namespace {

void check_crop(std::uint32_t h, std::uint32_t w, std::uint32_t side) {
  if (side < 1 || side > h || side > w) {
    fail(Errc::dimension_mismatch,
         "crop side " + std::to_string(side) + " exceeds input " +
             std::to_string(h) + "x" + std::to_string(w));
  }
}

void check_grid(std::uint32_t h, std::uint32_t w, const PatchGridSpec& spec) {
  if (spec.patch_size == 0 || spec.rows * spec.patch_size != h ||
      spec.cols * spec.patch_size != w) {
    fail(Errc::dimension_mismatch,
         "patch grid " + std::to_string(spec.rows) + "x" +
             std::to_string(spec.cols) + " (P=" +
             std::to_string(spec.patch_size) + ") inconsistent with image " +
             std::to_string(h) + "x" + std::to_string(w));
  }
}

}  // namespace

Raster center_crop(const Raster& img, std::uint32_t side) {
  check_crop(img.height, img.width, side);
  const std::uint32_t r0 = (img.height - side) / 2;
  const std::uint32_t c0 = (img.width - side) / 2;
  Raster out = Raster::zeros(side, side, img.channels);
  const std::size_t row_bytes =
      static_cast<std::size_t>(side) * img.channels * sizeof(float);
  for (std::uint32_t r = 0; r < side; ++r) {
    const float* src =
        img.data.data() +
        (static_cast<std::size_t>(r0 + r) * img.width + c0) * img.channels;
    std::memcpy(out.data.data() +
                    static_cast<std::size_t>(r) * side * img.channels,
                src, row_bytes);
  }
  return out;
}

MultiLabelMask center_crop(const MultiLabelMask& mask, std::uint32_t side) {
  check_crop(mask.height, mask.width, side);
  const std::uint32_t r0 = (mask.height - side) / 2;
  const std::uint32_t c0 = (mask.width - side) / 2;
  MultiLabelMask out = MultiLabelMask::empty(side, side, mask.classes);
  for (std::uint16_t cls = 0; cls < mask.classes; ++cls) {
    for (std::uint32_t r = 0; r < side; ++r) {
      for (std::uint32_t c = 0; c < side; ++c) {
        if (mask.get(r0 + r, c0 + c, cls)) {
          out.set(r, c, cls, true);
        }
      }
    }
  }
  return out;
}

Raster zscore(const Raster& img, std::span<const float> mean,
              std::span<const float> stddev) {
  if (mean.size() != img.channels || stddev.size() != img.channels) {
    fail(Errc::dimension_mismatch,
         "per-channel statistics length does not match channel count");
  }
  for (std::uint16_t ch = 0; ch < img.channels; ++ch) {
    if (!(stddev[ch] > 0.0f) || !std::isfinite(stddev[ch]) ||
        !std::isfinite(mean[ch])) {
      fail(Errc::invalid_statistics,
           "channel " + std::to_string(ch) + " has non-positive or non-finite std");
    }
  }
  Raster out = img;
  std::size_t i = 0;
  for (std::size_t px = 0; px < img.pixel_count(); ++px) {
    for (std::uint16_t ch = 0; ch < img.channels; ++ch, ++i) {
      out.data[i] = (img.data[i] - mean[ch]) / stddev[ch];
    }
  }
  return out;
}

std::vector<float> patchify(const Raster& img, const PatchGridSpec& spec) {
  check_grid(img.height, img.width, spec);
  const std::uint32_t p = spec.patch_size;
  const std::size_t patch_floats =
      static_cast<std::size_t>(p) * p * img.channels;
  std::vector<float> out(patch_floats * spec.patch_count());
  const std::size_t row_bytes =
      static_cast<std::size_t>(p) * img.channels * sizeof(float);
  for (std::uint32_t i = 0; i < spec.patch_count(); ++i) {
    const std::uint32_t pr = (i / spec.cols) * p;
    const std::uint32_t pc = (i % spec.cols) * p;
    float* dst = out.data() + i * patch_floats;
    for (std::uint32_t r = 0; r < p; ++r) {
      const float* src =
          img.data.data() +
          (static_cast<std::size_t>(pr + r) * img.width + pc) * img.channels;
      std::memcpy(dst + static_cast<std::size_t>(r) * p * img.channels, src,
                  row_bytes);
    }
  }
  return out;
}

std::vector<std::uint8_t> patchify_mask(const MultiLabelMask& mask,
                                        const PatchGridSpec& spec) {
  check_grid(mask.height, mask.width, spec);
  const std::uint32_t p = spec.patch_size;
  const std::size_t stride = patch_value_stride(p * p, mask.classes);
  std::vector<std::uint8_t> out(stride * spec.patch_count(), 0);
  for (std::uint32_t i = 0; i < spec.patch_count(); ++i) {
    const std::uint32_t pr = (i / spec.cols) * p;
    const std::uint32_t pc = (i % spec.cols) * p;
    std::uint8_t* dst = out.data() + i * stride;
    for (std::uint32_t r = 0; r < p; ++r) {
      for (std::uint32_t c = 0; c < p; ++c) {
        const std::size_t pixel = static_cast<std::size_t>(r) * p + c;
        for (std::uint16_t cls = 0; cls < mask.classes; ++cls) {
          if (mask.get(pr + r, pc + c, cls)) {
            const std::size_t bit = pixel * mask.classes + cls;
            dst[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
          }
        }
      }
    }
  }
  return out;
}

SoftMask reassemble(std::span<const float> patch_preds,
                    const PatchGridSpec& spec, std::uint16_t classes) {
  const std::uint32_t p = spec.patch_size;
  const std::size_t patch_floats =
      static_cast<std::size_t>(p) * p * classes;
  if (classes < 1 || spec.patch_count() < 1 ||
      patch_preds.size() != patch_floats * spec.patch_count()) {
    fail(Errc::dimension_mismatch,
         "expected " + std::to_string(spec.patch_count()) + " patch records of " +
             std::to_string(patch_floats) + " floats, got " +
             std::to_string(patch_preds.size()) + " total");
  }
  SoftMask out =
      SoftMask::zeros(spec.rows * p, spec.cols * p, classes);
  const std::size_t row_bytes = static_cast<std::size_t>(p) * classes * sizeof(float);
  for (std::uint32_t i = 0; i < spec.patch_count(); ++i) {
    const std::uint32_t pr = (i / spec.cols) * p;
    const std::uint32_t pc = (i % spec.cols) * p;
    const float* src = patch_preds.data() + i * patch_floats;
    for (std::uint32_t r = 0; r < p; ++r) {
      std::memcpy(&out.at(pr + r, pc, 0),
                  src + static_cast<std::size_t>(r) * p * classes, row_bytes);
    }
  }
  return out;
}

void expand_patch_value(std::span<const std::uint8_t> packed,
                        std::uint32_t pixels_per_patch, std::uint16_t classes,
                        float* out) {
  const std::size_t bits =
      static_cast<std::size_t>(pixels_per_patch) * classes;
  if (packed.size() < (bits + 7) / 8) {
    fail(Errc::dimension_mismatch, "packed patch value too short");
  }
  for (std::size_t b = 0; b < bits; ++b) {
    out[b] = (packed[b / 8] >> (b % 8)) & 1u ? 1.0f : 0.0f;
  }
}

}  // namespace aoiseg
