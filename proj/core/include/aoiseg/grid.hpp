#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aoiseg/raster.hpp"

namespace aoiseg {

/// Packed byte length of one patch value record (P^2 x C bits, pixel-major,
/// class-minor, LSB-first).
inline std::size_t patch_value_stride(std::uint32_t pixels_per_patch,
                                      std::uint16_t classes) {
  return (static_cast<std::size_t>(pixels_per_patch) * classes + 7) / 8;
}

/// Extracts the side x side region centered on the input. Odd remainders use
/// floor for the top/left offset.
Raster center_crop(const Raster& img, std::uint32_t side);
MultiLabelMask center_crop(const MultiLabelMask& mask, std::uint32_t side);

/// Per-channel standardization: out = (in - mean[ch]) / stddev[ch].
Raster zscore(const Raster& img, std::span<const float> mean,
              std::span<const float> stddev);

/// Cuts the image into L = rows * cols patches. The result is patch-major:
/// patch i occupies the slice [i * P * P * channels, (i + 1) * ...), pixels
/// row-major and channel-minor within the patch. Concatenating patches in
/// order reproduces the image.
std::vector<float> patchify(const Raster& img, const PatchGridSpec& spec);

/// Same geometry as patchify on the mask planes. Each patch value is a
/// bit-packed P^2 x C record; bit index within the record is
/// pixel * classes + cls with pixels row-major inside the patch.
std::vector<std::uint8_t> patchify_mask(const MultiLabelMask& mask,
                                        const PatchGridSpec& spec);

/// Exact geometric inverse of patchify_mask on soft values. patch_preds holds
/// L consecutive P^2 x C float records (pixel-major, class-minor).
SoftMask reassemble(std::span<const float> patch_preds,
                    const PatchGridSpec& spec, std::uint16_t classes);

/// Expands one bit-packed patch value record into 0.0/1.0 floats (P^2 x C).
void expand_patch_value(std::span<const std::uint8_t> packed,
                        std::uint32_t pixels_per_patch, std::uint16_t classes,
                        float* out);

}  // namespace aoiseg
