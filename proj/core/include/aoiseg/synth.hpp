#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "aoiseg/raster.hpp"

namespace aoiseg {

// Class layout used by the generator.
inline constexpr std::uint16_t kClassWire = 0;
inline constexpr std::uint16_t kClassBall = 1;
inline constexpr std::uint16_t kClassWedge = 2;
inline constexpr std::uint16_t kClassEpoxy = 3;
inline constexpr std::uint16_t kSynthClasses = 4;

/// Parameters of a wire-bond-like scene family. Scenes are deterministic per
/// (seed, index): all mask geometry is rasterized with integer arithmetic
/// (plus IEEE-exact sqrt for vertex placement), so masks are bit-identical
/// across platforms. Photometrics (illumination, shading, speckle noise) are
/// float-only and never touch the mask.
struct SceneSpec {
  std::uint64_t seed = 0;
  std::uint32_t side = 512;

  std::uint32_t wire_count_min = 4;
  std::uint32_t wire_count_max = 9;
  std::uint32_t wire_thickness_min = 2;
  std::uint32_t wire_thickness_max = 4;
  float wire_curvature = 0.35f;  // bow amplitude as a fraction of span

  std::uint32_t ball_count = 16;  // cap on decorated wire starts
  std::uint32_t ball_radius_min = 5;
  std::uint32_t ball_radius_max = 9;

  std::uint32_t wedge_count = 16;  // cap on decorated wire ends
  std::uint32_t wedge_size_min = 8;
  std::uint32_t wedge_size_max = 13;

  std::uint32_t epoxy_blob_count = 3;
  float epoxy_area_fraction = 0.40f;  // of the placeable interior

  std::uint32_t border_min = 24;  // black frame width range
  std::uint32_t border_max = 40;
  std::uint32_t max_shift = 32;  // global layout translation

  float contrast_jitter_min = 0.85f;
  float contrast_jitter_max = 1.15f;
  float noise_sigma_min = 0.0f;
  float noise_sigma_max = 0.02f;  // multiplicative speckle

  void validate() const;
};

/// Renders scene `index` of the family. Channel 1 is the base illumination
/// view; channel 2 is the same content under a different gain and directional
/// shading. Unlabeled pixels are exactly zero in both channels, so the mask
/// support equals the rendered support.
std::pair<Raster, MultiLabelMask> generate_scene(const SceneSpec& spec,
                                                 std::uint32_t index);

/// Writes n AOIR/AOIM pairs plus manifest.tsv into out_dir (created if
/// missing) and returns the manifest path. Stable ids: scene_00000, ...
std::string generate_dataset(const SceneSpec& spec, std::uint32_t n,
                             const std::string& out_dir);

/// Covariate-shift tool: integer translation (mask moves identically),
/// multiply-around-mean contrast adjustment, additive seeded Gaussian noise
/// clipped to [0, 1]. Errors if the translation would clip labeled or
/// rendered content.
std::pair<Raster, MultiLabelMask> perturb(const Raster& img,
                                          const MultiLabelMask& mask, int dy,
                                          int dx, float contrast,
                                          float noise_sigma,
                                          std::uint64_t seed);

}  // namespace aoiseg
