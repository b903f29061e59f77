#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bokeh/error.hpp"
#include "bokeh/optics.hpp"
#include "bokeh/parallel.hpp"
#include "bokeh/raster.hpp"

namespace bokeh {

inline constexpr double kDefaultSharpThreshold = 0.05;

struct RenderConfig {
  int blade_count = 0;
  double blade_rotation_rad = 0.0;
  std::optional<double> max_radius_px;  // unset: scaled with the image diagonal
  double highlight_gain = 4.0;
  double highlight_knee = 0.9;
  int layer_count = 8;
  FocusReference focus_ref = FocusReference::median();

  void validate() const {
    require(valid_blade_count(blade_count), ErrorCode::InvalidBladeCount,
            "blade_count must be 0 or in [5, 11]");
    require(std::isfinite(blade_rotation_rad), ErrorCode::InvalidConfig, "blade_rotation_rad must be finite");
    if (max_radius_px)
      require(std::isfinite(*max_radius_px) && *max_radius_px >= 0.0, ErrorCode::NonPositiveInput,
              "max_radius_px must be finite and non-negative");
    require(highlight_gain >= 1.0 && std::isfinite(highlight_gain), ErrorCode::InvalidGain,
            "highlight_gain must be >= 1");
    require(highlight_knee >= 0.0 && highlight_knee < 1.0, ErrorCode::InvalidKnee,
            "highlight_knee must lie in [0, 1)");
    require(layer_count >= 1 && layer_count <= 64, ErrorCode::InvalidConfig, "layer_count must lie in [1, 64]");
  }

  /// Accepts exactly the keys blade_count, blade_rotation_rad, max_radius_px,
  /// highlight_gain, highlight_knee, layer_count and focus_ref; all optional.
  /// focus_ref is a distance in meters or the string "median".
  static RenderConfig from_json(const nlohmann::json& j) {
    require(j.is_object(), ErrorCode::InvalidConfig, "render config must be a JSON object");
    RenderConfig cfg;
    try {
      for (const auto& [key, value] : j.items()) {
        if (key == "blade_count") cfg.blade_count = value.get<int>();
        else if (key == "blade_rotation_rad") cfg.blade_rotation_rad = value.get<double>();
        else if (key == "max_radius_px") {
          if (value.is_null()) cfg.max_radius_px.reset();
          else cfg.max_radius_px = value.get<double>();
        } else if (key == "highlight_gain") cfg.highlight_gain = value.get<double>();
        else if (key == "highlight_knee") cfg.highlight_knee = value.get<double>();
        else if (key == "layer_count") cfg.layer_count = value.get<int>();
        else if (key == "focus_ref") {
          if (value.is_string()) {
            require(value.get<std::string>() == "median", ErrorCode::InvalidConfig,
                    "focus_ref must be a number or \"median\"");
            cfg.focus_ref = FocusReference::median();
          } else {
            cfg.focus_ref = FocusReference::at(value.get<double>());
          }
        } else {
          fail(ErrorCode::InvalidConfig, "unknown render config key '" + key + "'");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::InvalidConfig, e.what());
    }
    cfg.validate();
    return cfg;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["blade_count"] = blade_count;
    j["blade_rotation_rad"] = blade_rotation_rad;
    j["max_radius_px"] = max_radius_px ? nlohmann::json(*max_radius_px) : nlohmann::json(nullptr);
    j["highlight_gain"] = highlight_gain;
    j["highlight_knee"] = highlight_knee;
    j["layer_count"] = layer_count;
    j["focus_ref"] = focus_ref.is_median() ? nlohmann::json("median") : nlohmann::json(*focus_ref.distance());
    return j;
  }
};

/// Pins the image-dependent parts of a config (median focus, default radius
/// cap) so that tiles and transformed copies render consistently.
inline RenderConfig resolve_config(const RenderConfig& cfg, const DepthMap& depth) {
  RenderConfig out = cfg;
  if (out.focus_ref.is_median()) out.focus_ref = FocusReference::at(median_depth(depth));
  if (!out.max_radius_px) out.max_radius_px = default_max_radius_px(depth.width(), depth.height());
  return out;
}

/// W_focus: 1 where the scene should stay sharp, 0 where fully defocused.
class FocusWeights : public Raster<double> {
 public:
  FocusWeights() = default;
  explicit FocusWeights(Raster<double> r) : Raster<double>(std::move(r)) {
    require(channels() == 1, ErrorCode::DimensionMismatch, "focus weights must be single-channel");
    for (double v : data())
      require(v >= 0.0 && v <= 1.0, ErrorCode::InvariantViolation, "focus weight outside [0, 1]");
  }
};

inline void check_highlight_params(double gain, double knee) {
  require(knee >= 0.0 && knee < 1.0, ErrorCode::InvalidKnee, "highlight knee must lie in [0, 1)");
  require(gain >= 1.0 && std::isfinite(gain), ErrorCode::InvalidGain, "highlight gain must be >= 1");
}

inline RasterImage highlight_boost(const RasterImage& img, double gain, double knee) {
  check_highlight_params(gain, knee);
  RasterImage out = img;
  for (float& v : out.data())
    if (v > knee) v = static_cast<float>(knee + (double(v) - knee) * gain);
  return out;
}

inline RasterImage highlight_unboost(const RasterImage& img, double gain, double knee) {
  check_highlight_params(gain, knee);
  RasterImage out = img;
  for (float& v : out.data())
    if (v > knee) v = static_cast<float>(knee + (double(v) - knee) / gain);
  return out;
}

/// Extra blur to apply on top of the f/22 capture: the target radius with the
/// source aperture's own radius removed in quadrature. Zero for f >= 22.
inline RadiusMap defocus_radius_map(const DepthMap& depth, double target_f, double focus_depth,
                                    double max_radius_px) {
  const FocusReference focus = FocusReference::at(focus_depth);
  const RadiusMap target = coc_to_radius_px(coc_map(depth, target_f, focus), target_f, max_radius_px);
  const RadiusMap source =
      coc_to_radius_px(coc_map(depth, kReferenceFNumber, focus), kReferenceFNumber, max_radius_px);
  Raster<double> out(depth.width(), depth.height(), 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = target.data()[i];
    const double s = source.data()[i];
    out.data()[i] = std::sqrt(std::max(t * t - s * s, 0.0));
  }
  return RadiusMap(std::move(out));
}

/// Equal-population buckets of |D - focus|. Layer 0 holds the pixels nearest
/// the focus plane; tied distances always share a layer.
inline std::vector<int> assign_layers(const DepthMap& depth, double focus_depth, int layer_count) {
  require(layer_count >= 1, ErrorCode::InvalidConfig, "layer_count must be positive");
  const std::size_t n = depth.pixel_count();
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = std::abs(double(depth.data()[i]) - focus_depth);
  std::vector<double> sorted = dist;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> thresholds;
  // Threshold k is the largest distance of bucket k-1.
  for (int k = 1; k < layer_count; ++k) {
    const std::size_t end = n * static_cast<std::size_t>(k) / static_cast<std::size_t>(layer_count);
    thresholds.push_back(sorted[end > 0 ? end - 1 : 0]);
  }
  std::vector<int> layers(n);
  for (std::size_t i = 0; i < n; ++i)
    layers[i] = static_cast<int>(std::lower_bound(thresholds.begin(), thresholds.end(), dist[i]) - thresholds.begin());
  return layers;
}

struct ScatterParams {
  int layer_count = 1;
  int blade_count = 0;
  double blade_rotation_rad = 0.0;
};

namespace render_detail {

// Radii are snapped to 1/8 px so kernels can be shared between pixels.
inline constexpr double kRadiusStep = 1.0 / 8.0;

inline int radius_bucket(double r) { return static_cast<int>(std::lround(r / kRadiusStep)); }

}  // namespace render_detail

/// Layered scatter-gather on linear-light values. Each pixel spreads its
/// color through a PSF of its own radius into its layer's buffer, which
/// tracks accumulated color and coverage. Layers are then composited
/// farthest-from-focus first, each normalized by its coverage and weighted by
/// min(coverage, 1). The final division by the accumulated alpha fills seams
/// left behind occluders. Output is not clamped.
inline RasterImage layered_scatter(const RasterImage& linear, const std::vector<int>& layers,
                                   const RadiusMap& radius, const ScatterParams& params) {
  require_same_extent(linear, radius, "layered_scatter");
  require(layers.size() == linear.pixel_count(), ErrorCode::DimensionMismatch, "layer index count mismatch");
  require(params.layer_count >= 1, ErrorCode::InvalidConfig, "layer_count must be positive");

  const int W = linear.width();
  const int H = linear.height();
  const int ch = linear.channels();
  const std::size_t npix = linear.pixel_count();

  std::vector<int> bucket(npix);
  std::map<int, PsfKernel> kernels;
  for (std::size_t i = 0; i < npix; ++i) {
    bucket[i] = render_detail::radius_bucket(radius.data()[i]);
    if (!kernels.count(bucket[i]))
      kernels.emplace(bucket[i], make_psf(bucket[i] * render_detail::kRadiusStep, params.blade_count,
                                          params.blade_rotation_rad));
  }
  std::vector<const PsfKernel*> kernel_of(npix);
  int reach = 0;
  for (std::size_t i = 0; i < npix; ++i) {
    kernel_of[i] = &kernels.at(bucket[i]);
    reach = std::max(reach, kernel_of[i]->half);
  }
  std::vector<bool> occupied(static_cast<std::size_t>(params.layer_count), false);
  for (int l : layers) {
    require(l >= 0 && l < params.layer_count, ErrorCode::InvalidConfig, "layer index out of range");
    occupied[static_cast<std::size_t>(l)] = true;
  }

  std::vector<double> acc_color(npix * ch, 0.0);
  std::vector<double> acc_alpha(npix, 0.0);
  std::vector<double> color(npix * ch);
  std::vector<double> coverage(npix);
  auto src = linear.data();

  const int workers = thread_count();
  const std::size_t bands = static_cast<std::size_t>(std::min(H, std::max(workers, 1)));

  for (int layer = params.layer_count - 1; layer >= 0; --layer) {
    if (!occupied[static_cast<std::size_t>(layer)]) continue;
    std::fill(color.begin(), color.end(), 0.0);
    std::fill(coverage.begin(), coverage.end(), 0.0);

    // Each band owns a disjoint range of output rows and visits sources in
    // raster order, so per-pixel summation order is independent of threading.
    parallel_for(bands, [&](std::size_t b0, std::size_t b1) {
      for (std::size_t b = b0; b < b1; ++b) {
        const int y0 = static_cast<int>(b * H / bands);
        const int y1 = static_cast<int>((b + 1) * H / bands);
        for (int sy = std::max(0, y0 - reach); sy < std::min(H, y1 + reach); ++sy) {
          for (int sx = 0; sx < W; ++sx) {
            const std::size_t p = static_cast<std::size_t>(sy) * W + sx;
            if (layers[p] != layer) continue;
            const PsfKernel& k = *kernel_of[p];
            const int h = k.half;
            const int dy_lo = std::max(-h, y0 - sy);
            const int dy_hi = std::min(h, y1 - 1 - sy);
            for (int dy = dy_lo; dy <= dy_hi; ++dy) {
              const int qy = sy + dy;
              for (int dx = std::max(-h, -sx); dx <= std::min(h, W - 1 - sx); ++dx) {
                const double w = k.at(dx, dy);
                if (w == 0.0) continue;
                const std::size_t q = static_cast<std::size_t>(qy) * W + (sx + dx);
                coverage[q] += w;
                for (int c = 0; c < ch; ++c) color[q * ch + c] += w * src[p * ch + c];
              }
            }
          }
        }
      }
    }, workers);

    for (std::size_t q = 0; q < npix; ++q) {
      const double cov = coverage[q];
      if (cov <= 0.0) continue;
      const double a = std::min(cov, 1.0);
      for (int c = 0; c < ch; ++c)
        acc_color[q * ch + c] = color[q * ch + c] / cov * a + acc_color[q * ch + c] * (1.0 - a);
      acc_alpha[q] = a + acc_alpha[q] * (1.0 - a);
    }
  }

  RasterImage out(W, H, ch);
  for (std::size_t q = 0; q < npix; ++q) {
    for (int c = 0; c < ch; ++c) {
      const double v = acc_alpha[q] > 0.0 ? acc_color[q * ch + c] / acc_alpha[q] : src[q * ch + c];
      out.data()[q * ch + c] = static_cast<float>(v);
    }
  }
  return out;
}

/// Renders the target aperture from an all-in-focus (f/22) capture and its
/// depth. Pixel values are taken as sRGB-encoded and linearized internally;
/// highlights are boosted before the blur and restored after it. The result
/// is clamped to [0, 1].
inline RasterImage render_bokeh(const RasterImage& img, const DepthMap& depth, const ApertureSetting& target,
                                const RenderConfig& cfg) {
  require_same_extent(img, depth, "render_bokeh image vs depth");
  require(target.f_number > 0.0 && std::isfinite(target.f_number), ErrorCode::NonPositiveInput,
          "target f-number must be positive");
  cfg.validate();
  const RenderConfig resolved = resolve_config(cfg, depth);
  const double focus = *resolved.focus_ref.distance();

  const RadiusMap radius = defocus_radius_map(depth, target.f_number, focus, *resolved.max_radius_px);
  const std::vector<int> layers = assign_layers(depth, focus, resolved.layer_count);

  RasterImage lin = decode_srgb(img);
  for (float& v : lin.data()) v = std::clamp(v, 0.0f, 1.0f);
  lin = highlight_boost(lin, resolved.highlight_gain, resolved.highlight_knee);
  RasterImage blurred =
      layered_scatter(lin, layers, radius, {resolved.layer_count, resolved.blade_count, resolved.blade_rotation_rad});
  blurred = highlight_unboost(blurred, resolved.highlight_gain, resolved.highlight_knee);
  for (float& v : blurred.data()) v = std::clamp(v, 0.0f, 1.0f);
  return encode_srgb(blurred);
}

/// I* = coarse + residual * (1 - W_focus), clamped to [0, 1].
inline RasterImage compose_refinement(const RasterImage& coarse, const RasterImage& residual, const FocusWeights& w) {
  require(coarse.same_shape(residual), ErrorCode::DimensionMismatch, "coarse vs residual shape");
  require_same_extent(coarse, w, "coarse vs focus weights");
  RasterImage out = coarse;
  const int ch = coarse.channels();
  for (std::size_t p = 0; p < coarse.pixel_count(); ++p) {
    const double keep = 1.0 - w.data()[p];
    for (int c = 0; c < ch; ++c) {
      const std::size_t i = p * ch + c;
      out.data()[i] = static_cast<float>(std::clamp(double(coarse.data()[i]) + double(residual.data()[i]) * keep, 0.0, 1.0));
    }
  }
  return out;
}

inline FocusWeights focus_weights_from_coc(const CoCMap& coc, double sharp_threshold = kDefaultSharpThreshold) {
  require(sharp_threshold > 0.0 && sharp_threshold < 1.0, ErrorCode::InvalidThreshold,
          "sharp threshold must lie in (0, 1)");
  Raster<double> out(coc.width(), coc.height(), 1);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = std::clamp(1.0 - coc.data()[i] / sharp_threshold, 0.0, 1.0);
  return FocusWeights(std::move(out));
}

}  // namespace bokeh
