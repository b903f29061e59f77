#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "bokeh/error.hpp"
#include "bokeh/raster.hpp"

namespace bokeh {

/// Aperture the all-in-focus inputs are captured at.
inline constexpr double kReferenceFNumber = 22.0;

/// Blur radius cap at the capture resolution (2000x1500); other sizes scale
/// with the image diagonal.
inline constexpr double kDefaultMaxRadiusPx = 32.0;
inline constexpr double kReferenceDiagonalPx = 2500.0;

inline double default_max_radius_px(int width, int height) {
  return kDefaultMaxRadiusPx * std::hypot(double(width), double(height)) / kReferenceDiagonalPx;
}

/// Normalized defocus magnitude per pixel, in [0, 1].
class CoCMap : public Raster<double> {
 public:
  CoCMap() = default;
  explicit CoCMap(Raster<double> r) : Raster<double>(std::move(r)) {
    require(channels() == 1, ErrorCode::DimensionMismatch, "CoC map must be single-channel");
    for (double v : data())
      require(v >= 0.0 && v <= 1.0, ErrorCode::InvariantViolation, "CoC value outside [0, 1]");
  }
};

/// Per-pixel blur radius in pixels.
class RadiusMap : public Raster<double> {
 public:
  RadiusMap() = default;
  explicit RadiusMap(Raster<double> r) : Raster<double>(std::move(r)) {
    require(channels() == 1, ErrorCode::DimensionMismatch, "radius map must be single-channel");
  }
};

inline double aperture_diameter_mm(double focal_length_mm, double f_number) {
  require(focal_length_mm > 0.0 && f_number > 0.0, ErrorCode::NonPositiveInput,
          "focal length and f-number must be positive");
  return focal_length_mm / f_number;
}

/// |D(p) - focus| / f_number before clipping.
inline Raster<double> defocus_unclipped(const DepthMap& d, double f_number, double focus_depth) {
  require(f_number > 0.0, ErrorCode::NonPositiveInput, "f-number must be positive");
  Raster<double> out(d.width(), d.height(), 1);
  auto src = d.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::abs(double(src[i]) - focus_depth) / f_number;
  return out;
}

inline CoCMap coc_map(const DepthMap& d, double f_number, const FocusReference& focus) {
  require(f_number > 0.0, ErrorCode::NonPositiveInput, "f-number must be positive");
  Raster<double> raw = defocus_unclipped(d, f_number, resolve_focus(d, focus));
  for (double& v : raw.data()) v = std::clamp(v, 0.0, 1.0);
  return CoCMap(std::move(raw));
}

/// radius = max_radius * CoC * (22 / f_number), clamped to [0, max_radius].
inline RadiusMap coc_to_radius_px(const CoCMap& coc, double f_number, double max_radius_px) {
  require(f_number > 0.0, ErrorCode::NonPositiveInput, "f-number must be positive");
  require(max_radius_px >= 0.0 && std::isfinite(max_radius_px), ErrorCode::NonPositiveInput,
          "max radius must be finite and non-negative");
  Raster<double> out(coc.width(), coc.height(), 1);
  const double scale = max_radius_px * (kReferenceFNumber / f_number);
  auto src = coc.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(src[i] * scale, 0.0, max_radius_px);
  return RadiusMap(std::move(out));
}

/// Aperture-shaped point spread function on a (2*ceil(r)+1)^2 grid.
struct PsfKernel {
  double radius_px = 0.0;
  int blade_count = 0;
  double rotation_rad = 0.0;
  int half = 0;                 // grid spans [-half, half] on both axes
  std::vector<double> weights;  // row-major, (2*half+1)^2 entries

  int size() const noexcept { return 2 * half + 1; }
  double at(int dx, int dy) const noexcept {
    return weights[static_cast<std::size_t>(dy + half) * size() + static_cast<std::size_t>(dx + half)];
  }
  bool is_identity() const noexcept { return half == 0; }
};

inline bool valid_blade_count(int blades) { return blades == 0 || (blades >= 5 && blades <= 11); }

namespace optics_detail {

// Point-in-aperture test. Blade count 0 is a disk, otherwise a regular
// polygon with circumradius r and a vertex at angle `rotation`.
inline bool inside_aperture(double x, double y, double r, int blades, double rotation) {
  const double tol = 1e-9 * std::max(r, 1.0);
  const double rho = std::hypot(x, y);
  if (blades == 0) return rho <= r + tol;
  if (rho == 0.0) return true;
  const double sector = 2.0 * std::numbers::pi / blades;
  double phi = std::fmod(std::atan2(y, x) - rotation, sector);
  if (phi < 0.0) phi += sector;
  const double apothem = r * std::cos(std::numbers::pi / blades);
  return rho * std::cos(phi - 0.5 * sector) <= apothem + tol;
}

}  // namespace optics_detail

/// Disk (blade_count 0) or regular blade polygon, antialiased with 4x4
/// supersampling per pixel and normalized to unit mass.
inline PsfKernel make_psf(double radius_px, int blade_count = 0, double rotation_rad = 0.0) {
  require(std::isfinite(radius_px) && radius_px >= 0.0, ErrorCode::NonPositiveInput,
          "PSF radius must be finite and non-negative");
  require(valid_blade_count(blade_count), ErrorCode::InvalidBladeCount,
          "blade count must be 0 or in [5, 11], got " + std::to_string(blade_count));

  PsfKernel k;
  k.radius_px = radius_px;
  k.blade_count = blade_count;
  k.rotation_rad = rotation_rad;
  k.half = static_cast<int>(std::ceil(radius_px));
  if (k.half == 0) {
    k.weights = {1.0};
    return k;
  }

  constexpr int kSub = 4;
  const int n = k.size();
  k.weights.assign(static_cast<std::size_t>(n) * n, 0.0);
  double total = 0.0;
  for (int dy = -k.half; dy <= k.half; ++dy) {
    for (int dx = -k.half; dx <= k.half; ++dx) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = dx + (sx + 0.5) / kSub - 0.5;
          const double py = dy + (sy + 0.5) / kSub - 0.5;
          hits += optics_detail::inside_aperture(px, py, radius_px, blade_count, rotation_rad);
        }
      }
      const double w = double(hits) / (kSub * kSub);
      k.weights[static_cast<std::size_t>(dy + k.half) * n + static_cast<std::size_t>(dx + k.half)] = w;
      total += w;
    }
  }
  if (total <= 0.0) {
    // Too small to hit any subsample: degenerate to the identity.
    k.half = 0;
    k.weights = {1.0};
    return k;
  }
  for (double& w : k.weights) w /= total;
  return k;
}

}  // namespace bokeh
