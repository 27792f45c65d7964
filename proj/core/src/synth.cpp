#include "aoiseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <vector>

#include "aoiseg/error.hpp"
#include "aoiseg/io.hpp"

namespace aoiseg {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent streams per concern so photometric draws never shift the
// geometry sequence (and vice versa).
std::mt19937_64 scene_stream(std::uint64_t seed, std::uint32_t index,
                             std::uint64_t salt) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index)) ^
                         splitmix64(salt));
}

// Hand-rolled draws: mt19937_64 output is pinned by the standard, the
// distribution adapters are not.
std::uint32_t draw_u32(std::mt19937_64& rng, std::uint32_t lo,
                       std::uint32_t hi) {
  return lo + static_cast<std::uint32_t>(rng() % (hi - lo + 1));
}

double draw_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double draw_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * draw_unit(rng);
}

double draw_gauss(std::mt19937_64& rng) {
  // Polar Box-Muller; photometric path only.
  for (;;) {
    const double u = 2.0 * draw_unit(rng) - 1.0;
    const double v = 2.0 * draw_unit(rng) - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }
}

struct IVec {
  std::int64_t x = 0;
  std::int64_t y = 0;
};

// Paint surface: a per-pixel structure intensity plus the multi-label mask.
// paint() is the single write path, so mask support and rendered support
// coincide by construction.
struct Canvas {
  std::uint32_t side;
  std::uint32_t clip_lo;
  std::uint32_t clip_hi;  // exclusive
  std::vector<float> intensity;
  MultiLabelMask mask;

  Canvas(std::uint32_t s, std::uint32_t margin)
      : side(s),
        clip_lo(margin),
        clip_hi(s - margin),
        intensity(static_cast<std::size_t>(s) * s, 0.0f),
        mask(MultiLabelMask::empty(s, s, kSynthClasses)) {}

  void paint(std::int64_t x, std::int64_t y, std::uint16_t cls, float value) {
    if (x < static_cast<std::int64_t>(clip_lo) ||
        x >= static_cast<std::int64_t>(clip_hi) ||
        y < static_cast<std::int64_t>(clip_lo) ||
        y >= static_cast<std::int64_t>(clip_hi)) {
      return;
    }
    intensity[static_cast<std::size_t>(y) * side + x] = value;
    mask.set(static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(x),
             cls, true);
  }

  void disc(std::int64_t cx, std::int64_t cy, std::int64_t r,
            std::uint16_t cls, float value) {
    for (std::int64_t y = cy - r; y <= cy + r; ++y) {
      for (std::int64_t x = cx - r; x <= cx + r; ++x) {
        const std::int64_t dx = x - cx;
        const std::int64_t dy = y - cy;
        if (dx * dx + dy * dy <= r * r) {
          paint(x, y, cls, value);
        }
      }
    }
  }

  void triangle(IVec a, IVec b, IVec c, std::uint16_t cls, float value) {
    const auto cross = [](IVec o, IVec p, IVec q) {
      return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
    };
    const std::int64_t x0 = std::min({a.x, b.x, c.x});
    const std::int64_t x1 = std::max({a.x, b.x, c.x});
    const std::int64_t y0 = std::min({a.y, b.y, c.y});
    const std::int64_t y1 = std::max({a.y, b.y, c.y});
    const std::int64_t orient = cross(a, b, c);
    if (orient == 0) return;
    for (std::int64_t y = y0; y <= y1; ++y) {
      for (std::int64_t x = x0; x <= x1; ++x) {
        const IVec p{x, y};
        const std::int64_t c0 = cross(a, b, p);
        const std::int64_t c1 = cross(b, c, p);
        const std::int64_t c2 = cross(c, a, p);
        const bool inside = orient > 0 ? (c0 >= 0 && c1 >= 0 && c2 >= 0)
                                       : (c0 <= 0 && c1 <= 0 && c2 <= 0);
        if (inside) paint(x, y, cls, value);
      }
    }
  }
};

// Quadratic Bezier sampled with integer fixed-point arithmetic; a disc pen of
// the given radius is stamped along the curve.
void stroke_wire(Canvas& canvas, IVec a, IVec c, IVec b, std::int64_t radius,
                 float value) {
  constexpr std::int64_t kSteps = 512;
  for (std::int64_t i = 0; i <= kSteps; ++i) {
    const std::int64_t u = kSteps - i;
    const std::int64_t num_x =
        u * u * a.x + 2 * i * u * c.x + i * i * b.x;
    const std::int64_t num_y =
        u * u * a.y + 2 * i * u * c.y + i * i * b.y;
    const std::int64_t den = kSteps * kSteps;
    const std::int64_t px = (num_x + den / 2) / den;
    const std::int64_t py = (num_y + den / 2) / den;
    canvas.disc(px, py, radius, kClassWire, value);
  }
}

struct WireGeometry {
  IVec start, control, end;
  std::int64_t pen_radius = 1;
  std::int64_t ball_radius = 0;   // 0 = no ball
  std::int64_t wedge_size = 0;    // 0 = no wedge
};

}  // namespace

void SceneSpec::validate() const {
  if (side < 1 || side % 16 != 0) {
    fail(Errc::invalid_spec,
         "scene side must be a positive multiple of 16, got " +
             std::to_string(side));
  }
  const auto range_ok = [](std::uint32_t lo, std::uint32_t hi) {
    return lo <= hi;
  };
  if (!range_ok(wire_count_min, wire_count_max) ||
      !range_ok(wire_thickness_min, wire_thickness_max) ||
      !range_ok(ball_radius_min, ball_radius_max) ||
      !range_ok(wedge_size_min, wedge_size_max) ||
      !range_ok(border_min, border_max)) {
    fail(Errc::invalid_spec, "scene spec has an inverted range");
  }
  if (!(contrast_jitter_min <= contrast_jitter_max) ||
      !(contrast_jitter_min > 0.0f) ||
      !(noise_sigma_min <= noise_sigma_max) || !(noise_sigma_min >= 0.0f)) {
    fail(Errc::invalid_spec, "scene spec has an invalid photometric range");
  }
  if (!(wire_curvature >= 0.0f) || !(epoxy_area_fraction >= 0.0f) ||
      !(epoxy_area_fraction <= 1.0f)) {
    fail(Errc::invalid_spec, "scene spec has invalid geometry fractions");
  }
  const bool any_structure = wire_count_max > 0 || epoxy_blob_count > 0;
  const std::uint64_t margin =
      static_cast<std::uint64_t>(border_max) + max_shift;
  if (any_structure && side <= 2 * margin + 48) {
    fail(Errc::invalid_spec,
         "side " + std::to_string(side) +
             " leaves no room inside borders and shift margin");
  }
}

std::pair<Raster, MultiLabelMask> generate_scene(const SceneSpec& spec,
                                                 std::uint32_t index) {
  spec.validate();
  auto geom_rng = scene_stream(spec.seed, index, 0xA11CE5);
  auto photo_rng = scene_stream(spec.seed, index, 0xB0B1E5);
  auto noise_rng = scene_stream(spec.seed, index, 0xC0FFEE);

  const std::uint32_t side = spec.side;
  const std::uint32_t margin = spec.border_max + spec.max_shift;
  Canvas canvas(side, std::min(margin, side / 2));

  // Fixed draw order keeps scenes reproducible: frame, layout shift, epoxy,
  // wires with their terminals.
  const std::uint32_t border =
      draw_u32(geom_rng, spec.border_min, spec.border_max);
  const std::int64_t off_y =
      spec.max_shift == 0
          ? 0
          : static_cast<std::int64_t>(
                draw_u32(geom_rng, 0, 2 * spec.max_shift)) -
                spec.max_shift;
  const std::int64_t off_x =
      spec.max_shift == 0
          ? 0
          : static_cast<std::int64_t>(
                draw_u32(geom_rng, 0, 2 * spec.max_shift)) -
                spec.max_shift;

  const std::int64_t place_lo = margin + 20;
  const std::int64_t place_hi = static_cast<std::int64_t>(side) - margin - 20;
  const auto place = [&](std::mt19937_64& rng) {
    return IVec{
        place_lo + static_cast<std::int64_t>(
                       draw_u32(rng, 0, static_cast<std::uint32_t>(
                                            place_hi - place_lo - 1))),
        place_lo + static_cast<std::int64_t>(
                       draw_u32(rng, 0, static_cast<std::uint32_t>(
                                            place_hi - place_lo - 1)))};
  };

  // Photometric parameters (separate stream).
  const float epoxy_val = static_cast<float>(draw_range(photo_rng, 0.30, 0.38));
  const float wire_val = static_cast<float>(draw_range(photo_rng, 0.78, 0.88));
  const float ball_val = static_cast<float>(draw_range(photo_rng, 0.52, 0.60));
  const float wedge_val = static_cast<float>(draw_range(photo_rng, 0.64, 0.72));
  const double gain1 = draw_range(photo_rng, spec.contrast_jitter_min,
                                  spec.contrast_jitter_max);
  const double gain2 = gain1 * draw_range(photo_rng, 0.70, 0.92);
  const int dir_idx1 = static_cast<int>(draw_u32(photo_rng, 0, 7));
  const int dir_idx2 = static_cast<int>(draw_u32(photo_rng, 0, 7));
  const double slope1 = draw_range(photo_rng, 0.05, 0.18);
  const double slope2 = draw_range(photo_rng, 0.05, 0.18);
  const double sigma1 =
      draw_range(photo_rng, spec.noise_sigma_min, spec.noise_sigma_max);
  const double sigma2 =
      draw_range(photo_rng, spec.noise_sigma_min, spec.noise_sigma_max);

  // Epoxy body: irregular blobs as unions of discs.
  std::vector<IVec> blob_centers;
  std::vector<std::int64_t> blob_radii;
  if (spec.epoxy_blob_count > 0 && spec.epoxy_area_fraction > 0.0f) {
    const double usable =
        static_cast<double>(place_hi - place_lo);
    const double target_area =
        spec.epoxy_area_fraction * usable * usable;
    const double per_blob = target_area / spec.epoxy_blob_count;
    const std::int64_t r0 = std::max<std::int64_t>(
        8, static_cast<std::int64_t>(std::sqrt(per_blob / 3.14159265)));
    for (std::uint32_t bidx = 0; bidx < spec.epoxy_blob_count; ++bidx) {
      IVec center = place(geom_rng);
      center.x += off_x;
      center.y += off_y;
      blob_centers.push_back(center);
      blob_radii.push_back(r0);
      const std::uint32_t lumps = draw_u32(geom_rng, 4, 7);
      for (std::uint32_t l = 0; l < lumps; ++l) {
        const std::int64_t lr = static_cast<std::int64_t>(
            r0 * draw_range(geom_rng, 0.55, 0.95));
        const std::int64_t jx = static_cast<std::int64_t>(
            r0 * draw_range(geom_rng, -0.55, 0.55));
        const std::int64_t jy = static_cast<std::int64_t>(
            r0 * draw_range(geom_rng, -0.55, 0.55));
        canvas.disc(center.x + jx, center.y + jy, lr, kClassEpoxy, epoxy_val);
      }
    }
  }

  // Wires with ball/wedge terminals. Starts anchor inside an epoxy blob when
  // one exists, which guarantees wire-over-epoxy multi-label pixels.
  const std::uint32_t wires =
      spec.wire_count_max == 0
          ? 0
          : draw_u32(geom_rng, spec.wire_count_min, spec.wire_count_max);
  std::vector<WireGeometry> wire_geo;
  for (std::uint32_t wi = 0; wi < wires; ++wi) {
    WireGeometry g;
    if (!blob_centers.empty()) {
      const IVec& bc = blob_centers[wi % blob_centers.size()];
      const std::int64_t r = blob_radii[wi % blob_radii.size()];
      g.start.x = bc.x + static_cast<std::int64_t>(
                             r * draw_range(geom_rng, -0.4, 0.4));
      g.start.y = bc.y + static_cast<std::int64_t>(
                             r * draw_range(geom_rng, -0.4, 0.4));
    } else {
      g.start = place(geom_rng);
      g.start.x += off_x;
      g.start.y += off_y;
    }
    IVec end;
    for (int attempt = 0; attempt < 16; ++attempt) {
      end = place(geom_rng);
      end.x += off_x;
      end.y += off_y;
      const std::int64_t ddx = end.x - g.start.x;
      const std::int64_t ddy = end.y - g.start.y;
      if (ddx * ddx + ddy * ddy >=
          static_cast<std::int64_t>(side / 4) * (side / 4)) {
        break;
      }
    }
    g.end = end;
    const double span = std::sqrt(
        static_cast<double>((end.x - g.start.x) * (end.x - g.start.x) +
                            (end.y - g.start.y) * (end.y - g.start.y)));
    const double bow =
        span * spec.wire_curvature * draw_range(geom_rng, -1.0, 1.0);
    const double inv = span > 0.0 ? 1.0 / span : 0.0;
    const double perp_x = -(end.y - g.start.y) * inv;
    const double perp_y = (end.x - g.start.x) * inv;
    g.control.x = (g.start.x + end.x) / 2 +
                  static_cast<std::int64_t>(perp_x * bow);
    g.control.y = (g.start.y + end.y) / 2 +
                  static_cast<std::int64_t>(perp_y * bow);
    const std::uint32_t thickness =
        draw_u32(geom_rng, spec.wire_thickness_min, spec.wire_thickness_max);
    g.pen_radius = std::max<std::int64_t>(1, thickness / 2);
    if (wi < spec.ball_count && spec.ball_radius_max > 0) {
      g.ball_radius = static_cast<std::int64_t>(
          draw_u32(geom_rng, spec.ball_radius_min, spec.ball_radius_max));
    }
    if (wi < spec.wedge_count && spec.wedge_size_max > 0) {
      g.wedge_size = static_cast<std::int64_t>(
          draw_u32(geom_rng, spec.wedge_size_min, spec.wedge_size_max));
    }
    wire_geo.push_back(g);
  }

  for (const auto& g : wire_geo) {
    stroke_wire(canvas, g.start, g.control, g.end, g.pen_radius, wire_val);
  }
  for (const auto& g : wire_geo) {
    if (g.ball_radius > 0) {
      canvas.disc(g.start.x, g.start.y, g.ball_radius, kClassBall, ball_val);
    }
    if (g.wedge_size > 0) {
      // Small quadrilateral tipped at the wire end, aligned with the closing
      // segment direction (vertices rounded to integers, fill exact).
      double dx = static_cast<double>(g.end.x - g.control.x);
      double dy = static_cast<double>(g.end.y - g.control.y);
      const double len = std::sqrt(dx * dx + dy * dy);
      if (len > 0.0) {
        dx /= len;
        dy /= len;
      } else {
        dx = 1.0;
        dy = 0.0;
      }
      const double px = -dy;
      const double py = dx;
      const double s = static_cast<double>(g.wedge_size);
      const auto vertex = [&](double ax, double ay) {
        return IVec{g.end.x + static_cast<std::int64_t>(std::lround(ax)),
                    g.end.y + static_cast<std::int64_t>(std::lround(ay))};
      };
      const IVec q0 = vertex(px * s * 0.32, py * s * 0.32);
      const IVec q1 = vertex(-px * s * 0.32, -py * s * 0.32);
      const IVec q2 = vertex(dx * s - px * s * 0.55, dy * s - py * s * 0.55);
      const IVec q3 = vertex(dx * s + px * s * 0.55, dy * s + py * s * 0.55);
      canvas.triangle(q0, q1, q2, kClassWedge, wedge_val);
      canvas.triangle(q0, q2, q3, kClassWedge, wedge_val);
    }
  }

  // Photometric rendering: everything multiplicative, so unlabeled (zero)
  // pixels stay exactly zero in both channels.
  static constexpr int kDirs[8][2] = {{1, 0},  {1, 1},  {0, 1},  {-1, 1},
                                      {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
  const auto shade = [&](int dir_idx, double slope, std::uint32_t x,
                         std::uint32_t y) {
    const int ux = kDirs[dir_idx][0];
    const int uy = kDirs[dir_idx][1];
    const double maxabs =
        static_cast<double>(side) * (std::abs(ux) + std::abs(uy));
    const double proj = static_cast<double>(x) * ux + static_cast<double>(y) * uy;
    return 1.0 + slope * (proj / maxabs);
  };

  Raster img = Raster::zeros(side, side, 2);
  for (std::uint32_t y = 0; y < side; ++y) {
    for (std::uint32_t x = 0; x < side; ++x) {
      const float v = canvas.intensity[static_cast<std::size_t>(y) * side + x];
      const double n1 = sigma1 > 0.0
                            ? std::max(0.0, 1.0 + sigma1 * draw_gauss(noise_rng))
                            : 1.0;
      const double n2 = sigma2 > 0.0
                            ? std::max(0.0, 1.0 + sigma2 * draw_gauss(noise_rng))
                            : 1.0;
      if (v > 0.0f) {
        const double c1 = v * gain1 * shade(dir_idx1, slope1, x, y) * n1;
        const double c2 = v * gain2 * shade(dir_idx2, slope2, x, y) * n2;
        img.at(y, x, 0) = static_cast<float>(std::clamp(c1, 0.0, 1.0));
        img.at(y, x, 1) = static_cast<float>(std::clamp(c2, 0.0, 1.0));
      }
    }
  }

  // Black frame (content is kept clear of it by the placement margin).
  for (std::uint32_t y = 0; y < side; ++y) {
    for (std::uint32_t x = 0; x < side; ++x) {
      if (y < border || y >= side - border || x < border ||
          x >= side - border) {
        img.at(y, x, 0) = 0.0f;
        img.at(y, x, 1) = 0.0f;
      }
    }
  }

  return {std::move(img), std::move(canvas.mask)};
}

std::string generate_dataset(const SceneSpec& spec, std::uint32_t n,
                             const std::string& out_dir) {
  if (n < 1) {
    fail(Errc::invalid_spec, "dataset size must be >= 1");
  }
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    fail(Errc::io_error, "cannot create " + out_dir + ": " + ec.message());
  }
  std::vector<ManifestEntry> entries;
  entries.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%05u", i);
    auto [img, mask] = generate_scene(spec, i);
    const std::string raster_rel = std::string(id) + ".aoir";
    const std::string mask_rel = std::string(id) + ".aoim";
    save_raster((std::filesystem::path(out_dir) / raster_rel).string(), img);
    save_mask((std::filesystem::path(out_dir) / mask_rel).string(), mask);
    entries.push_back({id, raster_rel, mask_rel});
  }
  const std::string manifest_path =
      (std::filesystem::path(out_dir) / "manifest.tsv").string();
  write_manifest(manifest_path, entries);
  return manifest_path;
}

std::pair<Raster, MultiLabelMask> perturb(const Raster& img,
                                          const MultiLabelMask& mask, int dy,
                                          int dx, float contrast,
                                          float noise_sigma,
                                          std::uint64_t seed) {
  if (img.height != mask.height || img.width != mask.width) {
    fail(Errc::dimension_mismatch, "raster and mask dimensions differ");
  }
  if (!(contrast > 0.0f) || !std::isfinite(contrast) || noise_sigma < 0.0f ||
      !std::isfinite(noise_sigma)) {
    fail(Errc::invalid_spec, "contrast must be > 0 and noise sigma >= 0");
  }
  const std::int64_t h = img.height;
  const std::int64_t w = img.width;

  // Content bounding box over rendered and labeled pixels.
  std::int64_t r0 = h, r1 = -1, c0 = w, c1 = -1;
  for (std::int64_t r = 0; r < h; ++r) {
    for (std::int64_t c = 0; c < w; ++c) {
      bool content = false;
      for (std::uint16_t ch = 0; ch < img.channels && !content; ++ch) {
        content = img.at(static_cast<std::uint32_t>(r),
                         static_cast<std::uint32_t>(c), ch) != 0.0f;
      }
      for (std::uint16_t cls = 0; cls < mask.classes && !content; ++cls) {
        content = mask.get(static_cast<std::uint32_t>(r),
                           static_cast<std::uint32_t>(c), cls);
      }
      if (content) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
    }
  }
  if (r1 >= 0) {
    if (r0 + dy < 0 || r1 + dy >= h || c0 + dx < 0 || c1 + dx >= w) {
      fail(Errc::shift_out_of_range,
           "shift (" + std::to_string(dy) + ", " + std::to_string(dx) +
               ") clips content rows " + std::to_string(r0) + ".." +
               std::to_string(r1) + " cols " + std::to_string(c0) + ".." +
               std::to_string(c1));
    }
  }

  Raster out_img = Raster::zeros(img.height, img.width, img.channels);
  MultiLabelMask out_mask =
      MultiLabelMask::empty(mask.height, mask.width, mask.classes);
  for (std::int64_t r = 0; r < h; ++r) {
    const std::int64_t tr = r + dy;
    if (tr < 0 || tr >= h) continue;
    for (std::int64_t c = 0; c < w; ++c) {
      const std::int64_t tc = c + dx;
      if (tc < 0 || tc >= w) continue;
      for (std::uint16_t ch = 0; ch < img.channels; ++ch) {
        out_img.at(static_cast<std::uint32_t>(tr),
                   static_cast<std::uint32_t>(tc), ch) =
            img.at(static_cast<std::uint32_t>(r),
                   static_cast<std::uint32_t>(c), ch);
      }
      for (std::uint16_t cls = 0; cls < mask.classes; ++cls) {
        if (mask.get(static_cast<std::uint32_t>(r),
                     static_cast<std::uint32_t>(c), cls)) {
          out_mask.set(static_cast<std::uint32_t>(tr),
                       static_cast<std::uint32_t>(tc), cls, true);
        }
      }
    }
  }

  if (contrast != 1.0f) {
    for (std::uint16_t ch = 0; ch < out_img.channels; ++ch) {
      double mean = 0.0;
      for (std::size_t px = 0; px < out_img.pixel_count(); ++px) {
        mean += out_img.data[px * out_img.channels + ch];
      }
      mean /= static_cast<double>(out_img.pixel_count());
      for (std::size_t px = 0; px < out_img.pixel_count(); ++px) {
        float& v = out_img.data[px * out_img.channels + ch];
        v = static_cast<float>(
            std::clamp(mean + (v - mean) * contrast, 0.0, 1.0));
      }
    }
  }
  if (noise_sigma > 0.0f) {
    auto rng = std::mt19937_64(splitmix64(seed));
    for (float& v : out_img.data) {
      v = static_cast<float>(
          std::clamp(static_cast<double>(v) + noise_sigma * draw_gauss(rng),
                     0.0, 1.0));
    }
  }
  return {std::move(out_img), std::move(out_mask)};
}

}  // namespace aoiseg
