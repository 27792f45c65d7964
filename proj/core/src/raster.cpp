#include "aoiseg/raster.hpp"

#include <string>

#include "aoiseg/error.hpp"

namespace aoiseg {

Raster Raster::zeros(std::uint32_t height, std::uint32_t width,
                     std::uint16_t channels) {
  if (height < 1 || width < 1 || channels < 1) {
    fail(Errc::dimension_mismatch,
         "raster dimensions must be positive, got " + std::to_string(height) +
             "x" + std::to_string(width) + "x" + std::to_string(channels));
  }
  Raster r;
  r.height = height;
  r.width = width;
  r.channels = channels;
  r.data.assign(static_cast<std::size_t>(height) * width * channels, 0.0f);
  return r;
}

SoftMask SoftMask::zeros(std::uint32_t height, std::uint32_t width,
                         std::uint16_t classes) {
  if (height < 1 || width < 1 || classes < 1) {
    fail(Errc::dimension_mismatch, "soft mask dimensions must be positive");
  }
  SoftMask m;
  m.height = height;
  m.width = width;
  m.classes = classes;
  m.values.assign(static_cast<std::size_t>(height) * width * classes, 0.0f);
  return m;
}

MultiLabelMask MultiLabelMask::empty(std::uint32_t height, std::uint32_t width,
                                     std::uint16_t classes) {
  if (height < 1 || width < 1 || classes < 1) {
    fail(Errc::dimension_mismatch, "mask dimensions must be positive");
  }
  MultiLabelMask m;
  m.height = height;
  m.width = width;
  m.classes = classes;
  m.words.assign(m.plane_words() * classes, 0);
  return m;
}

PatchGridSpec PatchGridSpec::from_image(std::uint32_t height,
                                        std::uint32_t width,
                                        std::uint32_t patch_size) {
  if (patch_size == 0 || height % patch_size != 0 || width % patch_size != 0) {
    fail(Errc::dimension_mismatch,
         "patch size " + std::to_string(patch_size) +
             " does not divide image " + std::to_string(height) + "x" +
             std::to_string(width));
  }
  PatchGridSpec spec;
  spec.patch_size = patch_size;
  spec.rows = height / patch_size;
  spec.cols = width / patch_size;
  return spec;
}

}  // namespace aoiseg
