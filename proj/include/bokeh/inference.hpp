#pragma once

#include <array>
#include <cmath>
#include <iostream>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "bokeh/error.hpp"
#include "bokeh/parallel.hpp"
#include "bokeh/raster.hpp"

namespace bokeh {

/// Element of the dihedral group of the square: an optional horizontal flip
/// followed by `quarter_turns` counter-clockwise 90 degree rotations.
struct DihedralTransform {
  int quarter_turns = 0;  // 0..3
  bool flip_horizontal = false;

  friend bool operator==(const DihedralTransform&, const DihedralTransform&) = default;

  /// (*this) applied after `first`.
  DihedralTransform after(const DihedralTransform& first) const {
    // R^a F^f R^b F^g = R^(a + (f ? -b : b)) F^(f xor g)
    const int b = flip_horizontal ? -first.quarter_turns : first.quarter_turns;
    return {((quarter_turns + b) % 4 + 4) % 4, flip_horizontal != first.flip_horizontal};
  }

  DihedralTransform inverse() const {
    if (flip_horizontal) return *this;
    return {(4 - quarter_turns) % 4, false};
  }
};

inline constexpr std::array<DihedralTransform, 8> all_dihedral_transforms() {
  return {{{0, false}, {1, false}, {2, false}, {3, false}, {0, true}, {1, true}, {2, true}, {3, true}}};
}

namespace inference_detail {

template <typename T>
Raster<T> flip_h(const Raster<T>& in) {
  Raster<T> out(in.width(), in.height(), in.channels());
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x)
      for (int c = 0; c < in.channels(); ++c) out.at(in.width() - 1 - x, y, c) = in.at(x, y, c);
  return out;
}

// One counter-clockwise quarter turn: (x, y) -> (y, W-1-x).
template <typename T>
Raster<T> rotate_ccw(const Raster<T>& in) {
  Raster<T> out(in.height(), in.width(), in.channels());
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x)
      for (int c = 0; c < in.channels(); ++c) out.at(y, in.width() - 1 - x, c) = in.at(x, y, c);
  return out;
}

}  // namespace inference_detail

/// Exact pixel permutation; 90 degree turns swap width and height.
template <typename T>
Raster<T> apply_transform(const Raster<T>& img, const DihedralTransform& t) {
  Raster<T> out = t.flip_horizontal ? inference_detail::flip_h(img) : img;
  for (int i = 0; i < t.quarter_turns; ++i) out = inference_detail::rotate_ccw(out);
  return out;
}

inline RasterImage apply_transform(const RasterImage& img, const DihedralTransform& t) {
  return RasterImage(apply_transform(static_cast<const Raster<float>&>(img), t));
}

inline DepthMap apply_transform(const DepthMap& d, const DihedralTransform& t) {
  return DepthMap(apply_transform(static_cast<const Raster<float>&>(d), t));
}

namespace inference_detail {

inline void accumulate(std::vector<double>& acc, const RasterImage& img, double weight) {
  auto d = img.data();
  for (std::size_t i = 0; i < d.size(); ++i) acc[i] += weight * double(d[i]);
}

inline RasterImage finish(const RasterImage& shape, const std::vector<double>& acc) {
  RasterImage out(shape.width(), shape.height(), shape.channels());
  for (std::size_t i = 0; i < acc.size(); ++i) out.data()[i] = static_cast<float>(acc[i]);
  return out;
}

template <typename Op>
RasterImage run_op(Op& op, const RasterImage& img, const DepthMap* aux) {
  if constexpr (std::is_invocable_r_v<RasterImage, Op&, const RasterImage&, const DepthMap&>) {
    require(aux != nullptr, ErrorCode::OperatorDimensionError, "operator needs a depth map");
    return op(img, *aux);
  } else {
    return op(img);
  }
}

inline void check_dims(const RasterImage& in, const RasterImage& out, const char* what) {
  require(in.same_shape(out), ErrorCode::OperatorDimensionError,
          std::string(what) + ": operator changed the image shape from " + std::to_string(in.width()) + "x" +
              std::to_string(in.height()) + "x" + std::to_string(in.channels()) + " to " +
              std::to_string(out.width()) + "x" + std::to_string(out.height()) + "x" + std::to_string(out.channels()));
}

}  // namespace inference_detail

/// Mean of op over the 8 dihedral copies, each mapped back before averaging.
/// The depth map, when given, is transformed alongside the image and op is
/// called as op(image, depth). Branches may run concurrently, so op must be
/// safe to call from several threads; accumulation order is fixed.
template <typename Op>
RasterImage tta_ensemble(Op&& op, const RasterImage& img, const DepthMap* aux = nullptr) {
  if (aux) require_same_extent(img, *aux, "tta_ensemble image vs depth");
  const auto transforms = all_dihedral_transforms();
  std::array<std::optional<RasterImage>, 8> outputs;
  parallel_for(transforms.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const RasterImage x = apply_transform(img, transforms[i]);
      std::optional<DepthMap> d;
      if (aux) d = apply_transform(*aux, transforms[i]);
      RasterImage y = inference_detail::run_op(op, x, d ? &*d : nullptr);
      inference_detail::check_dims(x, y, "tta_ensemble");
      outputs[i] = apply_transform(y, transforms[i].inverse());
    }
  });
  std::vector<double> acc(img.size(), 0.0);
  for (const auto& y : outputs) inference_detail::accumulate(acc, *y, 1.0);
  for (double& v : acc) v /= double(transforms.size());
  return inference_detail::finish(img, acc);
}

template <typename Op>
RasterImage tta_ensemble(Op&& op, const RasterImage& img, const DepthMap& aux) {
  return tta_ensemble(std::forward<Op>(op), img, &aux);
}

struct TileSpec {
  int tile_px = 896;
  int stride_px = 384;

  void validate() const {
    require(tile_px > 0 && stride_px > 0 && stride_px <= tile_px, ErrorCode::InvalidConfig,
            "tiles need 0 < stride <= tile");
  }
};

/// Tile origins along one axis: multiples of the stride, with the last
/// origin clamped so the final tile ends at the image edge.
inline std::vector<int> tile_origins(int length, int tile, int stride) {
  std::vector<int> origins;
  if (tile >= length) return {0};
  for (int o = 0;; o += stride) {
    if (o + tile >= length) {
      origins.push_back(length - tile);
      break;
    }
    origins.push_back(o);
  }
  return origins;
}

/// Separable raised-cosine profile, strictly positive on the tile.
inline double hann_weight(int i, int length) {
  const double s = std::sin(std::numbers::pi * (i + 0.5) / length);
  return s * s;
}

struct TilePlan {
  int tile_w = 0;
  int tile_h = 0;
  std::vector<int> xs;
  std::vector<int> ys;
  bool clipped = false;  // requested tile exceeded the image

  std::size_t count() const noexcept { return xs.size() * ys.size(); }
};

inline TilePlan plan_tiles(int width, int height, const TileSpec& spec) {
  spec.validate();
  TilePlan plan;
  plan.tile_w = std::min(spec.tile_px, width);
  plan.tile_h = std::min(spec.tile_px, height);
  plan.clipped = spec.tile_px > width || spec.tile_px > height;
  plan.xs = tile_origins(width, plan.tile_w, std::min(spec.stride_px, plan.tile_w));
  plan.ys = tile_origins(height, plan.tile_h, std::min(spec.stride_px, plan.tile_h));
  return plan;
}

/// Per-pixel sum of normalized blend weights over all tiles; 1 everywhere for
/// a correct plan.
inline Raster<double> tile_weight_coverage(int width, int height, const TilePlan& plan) {
  Raster<double> raw(width, height, 1, 0.0);
  for (int oy : plan.ys)
    for (int ox : plan.xs)
      for (int y = 0; y < plan.tile_h; ++y)
        for (int x = 0; x < plan.tile_w; ++x)
          raw.at(ox + x, oy + y) += hann_weight(x, plan.tile_w) * hann_weight(y, plan.tile_h);
  Raster<double> out(width, height, 1, 0.0);
  for (int oy : plan.ys)
    for (int ox : plan.xs)
      for (int y = 0; y < plan.tile_h; ++y)
        for (int x = 0; x < plan.tile_w; ++x)
          out.at(ox + x, oy + y) +=
              hann_weight(x, plan.tile_w) * hann_weight(y, plan.tile_h) / raw.at(ox + x, oy + y);
  return out;
}

namespace inference_detail {

template <typename T>
Raster<T> crop(const Raster<T>& in, int x0, int y0, int w, int h) {
  Raster<T> out(w, h, in.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < in.channels(); ++c) out.at(x, y, c) = in.at(x0 + x, y0 + y, c);
  return out;
}

}  // namespace inference_detail

/// Runs op on overlapping tiles and blends the results with Hann weights
/// normalized to a partition of unity. A tile larger than the image is
/// clipped to it with a warning on stderr. With a depth map, op receives the
/// matching depth crop as op(tile, depth_tile).
template <typename Op>
RasterImage tile_process(Op&& op, const RasterImage& img, const TileSpec& spec, const DepthMap* aux = nullptr) {
  if (aux) require_same_extent(img, *aux, "tile_process image vs depth");
  const TilePlan plan = plan_tiles(img.width(), img.height(), spec);
  if (plan.clipped)
    std::cerr << "warning: tile " << spec.tile_px << "px exceeds image " << img.width() << "x" << img.height()
              << ", clipping\n";

  if (plan.count() == 1) {
    RasterImage y = inference_detail::run_op(op, img, aux);
    inference_detail::check_dims(img, y, "tile_process");
    return y;
  }

  std::vector<std::pair<int, int>> origins;
  for (int oy : plan.ys)
    for (int ox : plan.xs) origins.emplace_back(ox, oy);
  std::vector<std::optional<RasterImage>> outputs(origins.size());
  parallel_for(origins.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto [ox, oy] = origins[i];
      const RasterImage tile(inference_detail::crop<float>(img, ox, oy, plan.tile_w, plan.tile_h));
      std::optional<DepthMap> dtile;
      if (aux) dtile = DepthMap(inference_detail::crop<float>(*aux, ox, oy, plan.tile_w, plan.tile_h));
      RasterImage y = inference_detail::run_op(op, tile, dtile ? &*dtile : nullptr);
      inference_detail::check_dims(tile, y, "tile_process");
      outputs[i] = std::move(y);
    }
  });

  const int ch = img.channels();
  std::vector<double> acc(img.size(), 0.0);
  std::vector<double> wsum(img.pixel_count(), 0.0);
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const auto [ox, oy] = origins[i];
    const RasterImage& y = *outputs[i];
    for (int ty = 0; ty < plan.tile_h; ++ty) {
      const double wy = hann_weight(ty, plan.tile_h);
      for (int tx = 0; tx < plan.tile_w; ++tx) {
        const double w = wy * hann_weight(tx, plan.tile_w);
        const std::size_t p = static_cast<std::size_t>(oy + ty) * img.width() + (ox + tx);
        wsum[p] += w;
        for (int c = 0; c < ch; ++c) acc[p * ch + c] += w * double(y.at(tx, ty, c));
      }
    }
  }
  for (std::size_t p = 0; p < wsum.size(); ++p)
    for (int c = 0; c < ch; ++c) acc[p * ch + c] /= wsum[p];
  return inference_detail::finish(img, acc);
}

template <typename Op>
RasterImage tile_process(Op&& op, const RasterImage& img, const TileSpec& spec, const DepthMap& aux) {
  return tile_process(std::forward<Op>(op), img, spec, &aux);
}

/// Weighted mean with weights normalized to sum 1.
inline RasterImage average_outputs(std::span<const RasterImage> outputs, std::span<const double> weights) {
  require(!outputs.empty(), ErrorCode::ZeroWeightSum, "no outputs to average");
  require(outputs.size() == weights.size(), ErrorCode::DimensionMismatch, "one weight per output required");
  double total = 0.0;
  for (double w : weights) {
    require(std::isfinite(w) && w >= 0.0, ErrorCode::InvalidWeight, "weights must be finite and non-negative");
    total += w;
  }
  require(total > 0.0, ErrorCode::ZeroWeightSum, "weights sum to zero");
  for (const auto& o : outputs) require(o.same_shape(outputs[0]), ErrorCode::DimensionMismatch, "outputs differ in shape");

  std::vector<double> acc(outputs[0].size(), 0.0);
  for (std::size_t i = 0; i < outputs.size(); ++i)
    if (weights[i] > 0.0) inference_detail::accumulate(acc, outputs[i], weights[i] / total);
  return inference_detail::finish(outputs[0], acc);
}

}  // namespace bokeh
