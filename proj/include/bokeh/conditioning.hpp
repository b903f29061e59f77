#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bokeh/error.hpp"
#include "bokeh/raster.hpp"

namespace bokeh {

inline constexpr int kDefaultBandCount = 8;
inline constexpr int kProjectedEmbeddingSize = 64;

struct ApertureEmbedding {
  std::vector<double> values;
};

/// Planar C x H x W feature tensor.
class FeatureMap {
 public:
  FeatureMap(int channels, int height, int width, float fill = 0.0f)
      : channels_(channels), height_(height), width_(width) {
    require(channels >= 1 && height >= 1 && width >= 1, ErrorCode::DimensionMismatch,
            "feature map dimensions must be positive");
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }
  FeatureMap(int channels, int height, int width, std::vector<float> data)
      : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    require(channels >= 1 && height >= 1 && width >= 1, ErrorCode::DimensionMismatch,
            "feature map dimensions must be positive");
    require(data_.size() == static_cast<std::size_t>(channels) * height * width, ErrorCode::DimensionMismatch,
            "feature map data length mismatch");
  }

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height_) * width_; }

  float at(int c, int y, int x) const noexcept { return data_[offset(c, y, x)]; }
  float& at(int c, int y, int x) noexcept { return data_[offset(c, y, x)]; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

 private:
  std::size_t offset(int c, int y, int x) const noexcept {
    return static_cast<std::size_t>(c) * plane_size() + static_cast<std::size_t>(y) * width_ + x;
  }

  int channels_;
  int height_;
  int width_;
  std::vector<float> data_;
};

/// Maps f/1..f/32 onto [0, 1].
inline double normalize_f_number(double f_number) { return (f_number - 1.0) / 31.0; }

/// Interleaved [sin(2^k pi x), cos(2^k pi x)] for k = 0..band_count-1.
inline ApertureEmbedding fourier_encode(double f_number, int band_count = kDefaultBandCount) {
  require(f_number > 0.0 && std::isfinite(f_number), ErrorCode::NonPositiveInput, "f-number must be positive");
  require(band_count >= 1, ErrorCode::NonPositiveInput, "band count must be positive");
  const double x = normalize_f_number(f_number);
  ApertureEmbedding e;
  e.values.reserve(2 * static_cast<std::size_t>(band_count));
  for (int k = 0; k < band_count; ++k) {
    const double arg = std::ldexp(std::numbers::pi * x, k);
    e.values.push_back(std::sin(arg));
    e.values.push_back(std::cos(arg));
  }
  return e;
}

/// Fixed 64 x (2*bands) projection applied after the raw encoding.
class ProjectionMatrix {
 public:
  ProjectionMatrix(int band_count, std::vector<float> rows)
      : band_count_(band_count), weights_(std::move(rows)) {
    require(band_count >= 1, ErrorCode::NonPositiveInput, "band count must be positive");
    require(weights_.size() == static_cast<std::size_t>(kProjectedEmbeddingSize) * cols(),
            ErrorCode::DimensionMismatch, "projection matrix must be 64 x (2*band_count)");
  }

  /// Reads 64 * 2 * band_count little-endian float32 values, row-major.
  static ProjectionMatrix load(const std::filesystem::path& path, int band_count = kDefaultBandCount) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) fail(ErrorCode::IoError, "cannot open projection matrix " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    const std::size_t expected = static_cast<std::size_t>(kProjectedEmbeddingSize) * 2 * band_count * 4;
    if (bytes != expected)
      fail(ErrorCode::DecodeError, path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                                       std::to_string(bytes));
    in.seekg(0);
    std::vector<unsigned char> raw(bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    std::vector<float> w(bytes / 4);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::uint32_t b = std::uint32_t(raw[4 * i]) | std::uint32_t(raw[4 * i + 1]) << 8 |
                              std::uint32_t(raw[4 * i + 2]) << 16 | std::uint32_t(raw[4 * i + 3]) << 24;
      w[i] = std::bit_cast<float>(b);
    }
    return ProjectionMatrix(band_count, std::move(w));
  }

  std::size_t cols() const noexcept { return 2 * static_cast<std::size_t>(band_count_); }

  ApertureEmbedding project(const ApertureEmbedding& raw) const {
    require(raw.values.size() == cols(), ErrorCode::DimensionMismatch, "embedding length does not match projection");
    ApertureEmbedding out;
    out.values.assign(kProjectedEmbeddingSize, 0.0);
    for (int r = 0; r < kProjectedEmbeddingSize; ++r)
      for (std::size_t c = 0; c < cols(); ++c) out.values[r] += double(weights_[r * cols() + c]) * raw.values[c];
    return out;
  }

 private:
  int band_count_;
  std::vector<float> weights_;
};

/// ln(source / target); positive when the target aperture is wider.
inline double log_aperture_ratio(double source_f, double target_f) {
  require(source_f > 0.0 && target_f > 0.0, ErrorCode::NonPositiveInput, "f-numbers must be positive");
  return std::log(source_f) - std::log(target_f);  // exactly antisymmetric, unlike log(a / b)
}

inline FeatureMap film_modulate(const FeatureMap& x, std::span<const float> scale, std::span<const float> shift) {
  require(scale.size() == static_cast<std::size_t>(x.channels()) && shift.size() == scale.size(),
          ErrorCode::DimensionMismatch, "FiLM parameters must have one entry per channel");
  FeatureMap out = x;
  const std::size_t plane = x.plane_size();
  for (int c = 0; c < x.channels(); ++c) {
    auto dst = out.data().subspan(c * plane, plane);
    for (float& v : dst) v = v * scale[c] + shift[c];
  }
  return out;
}

/// Channel 0 holds x / (width - 1), channel 1 holds y / (height - 1); a
/// degenerate axis maps to 0.
inline FeatureMap coordinate_map(int width, int height) {
  require(width >= 1 && height >= 1, ErrorCode::NonPositiveInput, "coordinate map dimensions must be positive");
  FeatureMap out(2, height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out.at(0, y, x) = width == 1 ? 0.0f : static_cast<float>(double(x) / (width - 1));
      out.at(1, y, x) = height == 1 ? 0.0f : static_cast<float>(double(y) / (height - 1));
    }
  }
  return out;
}

/// Constant map of clip(ln(source/target) / ln 11, 0, 1): 1 at f/22 -> f/2.
inline FeatureMap bokeh_strength_map(int width, int height, double source_f, double target_f) {
  const double strength = std::clamp(log_aperture_ratio(source_f, target_f) / std::log(11.0), 0.0, 1.0);
  require(width >= 1 && height >= 1, ErrorCode::NonPositiveInput, "strength map dimensions must be positive");
  return FeatureMap(1, height, width, static_cast<float>(strength));
}

class MaskSchedule {
 public:
  MaskSchedule(double start_ratio, double end_ratio, int total_steps)
      : start_(start_ratio), end_(end_ratio), total_(total_steps) {
    require(start_ratio >= 0.0 && start_ratio <= 1.0 && end_ratio >= 0.0 && end_ratio <= 1.0,
            ErrorCode::InvalidRatio, "mask ratios must lie in [0, 1]");
    require(start_ratio >= end_ratio, ErrorCode::InvariantViolation, "mask schedule must not grow over time");
    require(total_steps >= 1, ErrorCode::NonPositiveInput, "mask schedule needs at least one step");
  }

  double start_ratio() const noexcept { return start_; }
  double end_ratio() const noexcept { return end_; }
  int total_steps() const noexcept { return total_; }

 private:
  double start_;
  double end_;
  int total_;
};

inline double mask_ratio_at(const MaskSchedule& s, int step) {
  require(step >= 0 && step <= s.total_steps(), ErrorCode::StepOutOfRange,
          "step " + std::to_string(step) + " outside [0, " + std::to_string(s.total_steps()) + "]");
  if (step == s.total_steps()) return s.end_ratio();
  const double t = double(step) / s.total_steps();
  return s.start_ratio() + (s.end_ratio() - s.start_ratio()) * t;
}

namespace conditioning_detail {

// Uniform draw in [0, bound) by rejection on the raw engine output, so the
// sequence is identical across standard library implementations.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do r = rng(); while (r >= limit);
  return r % bound;
}

}  // namespace conditioning_detail

/// Binary pixel mask (1 = masked) built from block_px x block_px cells.
/// Exactly round(ratio * cells) cells are masked, drawn without replacement
/// by a seeded partial Fisher-Yates shuffle.
inline Raster<std::uint8_t> block_mask(int width, int height, int block_px, double ratio, std::uint64_t seed) {
  require(width >= 1 && height >= 1, ErrorCode::NonPositiveInput, "mask dimensions must be positive");
  require(block_px >= 1, ErrorCode::NonPositiveInput, "block size must be positive");
  require(ratio >= 0.0 && ratio <= 1.0, ErrorCode::InvalidRatio, "mask ratio must lie in [0, 1]");
  const int bw = (width + block_px - 1) / block_px;
  const int bh = (height + block_px - 1) / block_px;
  const std::size_t cells = static_cast<std::size_t>(bw) * bh;
  const auto chosen = static_cast<std::size_t>(std::llround(ratio * double(cells)));

  std::vector<std::size_t> order(cells);
  for (std::size_t i = 0; i < cells; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < chosen; ++i) {
    const std::size_t j = i + conditioning_detail::uniform_below(rng, cells - i);
    std::swap(order[i], order[j]);
  }

  Raster<std::uint8_t> mask(width, height, 1, std::uint8_t{0});
  for (std::size_t i = 0; i < chosen; ++i) {
    const int bx = static_cast<int>(order[i] % bw);
    const int by = static_cast<int>(order[i] / bw);
    for (int y = by * block_px; y < std::min(height, (by + 1) * block_px); ++y)
      for (int x = bx * block_px; x < std::min(width, (bx + 1) * block_px); ++x) mask.at(x, y) = 1;
  }
  return mask;
}

}  // namespace bokeh
