#pragma once

#include <bit>
#include <cstdint>
#include <vector>

namespace aoiseg {

/// Dense float image. Layout is row-major and channel-minor:
/// data[(r * width + c) * channels + ch]. The two-channel dual-illumination
/// format is the common case; channel-adapted (3-channel) and per-class soft
/// outputs reuse the same layout.
struct Raster {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint16_t channels = 0;
  std::vector<float> data;

  static Raster zeros(std::uint32_t height, std::uint32_t width,
                      std::uint16_t channels);

  float& at(std::uint32_t r, std::uint32_t c, std::uint16_t ch) {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  float at(std::uint32_t r, std::uint32_t c, std::uint16_t ch) const {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * width;
  }

  bool operator==(const Raster&) const = default;
};

/// Per-pixel soft class scores in [0, 1], same layout as Raster with
/// channels = classes.
struct SoftMask {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint16_t classes = 0;
  std::vector<float> values;

  static SoftMask zeros(std::uint32_t height, std::uint32_t width,
                        std::uint16_t classes);

  float& at(std::uint32_t r, std::uint32_t c, std::uint16_t cls) {
    return values[(static_cast<std::size_t>(r) * width + c) * classes + cls];
  }
  float at(std::uint32_t r, std::uint32_t c, std::uint16_t cls) const {
    return values[(static_cast<std::size_t>(r) * width + c) * classes + cls];
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * width;
  }
};

/// Multi-label boolean mask: one bit plane per class, any subset of classes
/// may be set per pixel. Planes are stored as 64-bit words; bit i of a plane
/// is pixel i in row-major order (LSB-first within a word), matching the AOIM
/// on-disk packing. Trailing bits of the last word are always zero.
struct MultiLabelMask {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint16_t classes = 0;
  std::vector<std::uint64_t> words;

  static MultiLabelMask empty(std::uint32_t height, std::uint32_t width,
                              std::uint16_t classes);

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * width;
  }
  std::size_t plane_words() const { return (pixel_count() + 63) / 64; }

  bool get_index(std::size_t pixel, std::uint16_t cls) const {
    const std::uint64_t word =
        words[cls * plane_words() + pixel / 64];
    return (word >> (pixel % 64)) & 1u;
  }
  bool get(std::uint32_t r, std::uint32_t c, std::uint16_t cls) const {
    return get_index(static_cast<std::size_t>(r) * width + c, cls);
  }
  void set_index(std::size_t pixel, std::uint16_t cls, bool value) {
    std::uint64_t& word = words[cls * plane_words() + pixel / 64];
    const std::uint64_t bit = std::uint64_t(1) << (pixel % 64);
    if (value) {
      word |= bit;
    } else {
      word &= ~bit;
    }
  }
  void set(std::uint32_t r, std::uint32_t c, std::uint16_t cls, bool value) {
    set_index(static_cast<std::size_t>(r) * width + c, cls, value);
  }

  /// Number of set pixels in one class plane.
  std::uint64_t count(std::uint16_t cls) const {
    std::uint64_t n = 0;
    const std::size_t pw = plane_words();
    for (std::size_t w = 0; w < pw; ++w) {
      n += std::popcount(words[cls * pw + w]);
    }
    return n;
  }

  bool operator==(const MultiLabelMask&) const = default;
};

/// Geometry of a non-overlapping patch grid. Patch order is row-major and
/// identical for images, masks, and embeddings: patch i covers block
/// (i / cols, i % cols).
struct PatchGridSpec {
  std::uint32_t patch_size = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;

  /// Derives the grid for an H x W image; patch_size must divide both
  /// dimensions exactly.
  static PatchGridSpec from_image(std::uint32_t height, std::uint32_t width,
                                  std::uint32_t patch_size);

  std::uint32_t patch_count() const { return rows * cols; }
  std::uint32_t pixels_per_patch() const { return patch_size * patch_size; }

  bool operator==(const PatchGridSpec&) const = default;
};

}  // namespace aoiseg
