#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bokeh/error.hpp"

namespace bokeh {

// Row-major, channel-interleaved pixel grid. Index of (x, y, c) is
// (y * width + x) * channels + c.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;

  Raster(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    check_shape();
    data_.assign(size(), fill);
  }

  Raster(int width, int height, int channels, std::vector<T> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check_shape();
    require(data_.size() == size(), ErrorCode::DimensionMismatch,
            "raster data length " + std::to_string(data_.size()) + " != " +
                std::to_string(width) + "x" + std::to_string(height) + "x" + std::to_string(channels));
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  std::size_t size() const noexcept { return pixel_count() * static_cast<std::size_t>(channels_); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(int x, int y, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  const T& at(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }
  T& at(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  bool same_shape(const Raster& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }
  template <typename U>
  bool same_extent(const Raster<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Raster& a, const Raster& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  void check_shape() const {
    require(width_ >= 1 && height_ >= 1, ErrorCode::DimensionMismatch,
            "raster dimensions must be positive, got " + std::to_string(width_) + "x" +
                std::to_string(height_));
    require(channels_ >= 1, ErrorCode::DimensionMismatch, "raster needs at least one channel");
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

template <typename T, typename U>
void require_same_extent(const Raster<T>& a, const Raster<U>& b, const char* what) {
  require(a.same_extent(b), ErrorCode::DimensionMismatch,
          std::string(what) + ": " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
              " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
}

/// Image pixels with 1 or 3 channels, nominally in [0, 1].
class RasterImage : public Raster<float> {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, int channels, float fill = 0.0f)
      : Raster<float>(width, height, channels, fill) {
    check_channels();
  }
  RasterImage(int width, int height, int channels, std::vector<float> data)
      : Raster<float>(width, height, channels, std::move(data)) {
    check_channels();
  }
  explicit RasterImage(Raster<float> raster) : Raster<float>(std::move(raster)) { check_channels(); }

 private:
  void check_channels() const {
    require(channels() == 1 || channels() == 3, ErrorCode::DimensionMismatch,
            "image must have 1 or 3 channels, got " + std::to_string(channels()));
  }
};

/// Scene depth per pixel; always finite and non-negative.
class DepthMap : public Raster<float> {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, float fill) : Raster<float>(width, height, 1, fill) { validate(); }
  DepthMap(int width, int height, std::vector<float> data)
      : Raster<float>(width, height, 1, std::move(data)) {
    validate();
  }
  explicit DepthMap(Raster<float> raster) : Raster<float>(std::move(raster)) {
    require(channels() == 1, ErrorCode::DimensionMismatch, "depth map must be single-channel");
    validate();
  }

 private:
  void validate() const {
    for (float v : data()) {
      require(std::isfinite(v), ErrorCode::NonFiniteDepth, "depth map contains NaN or Inf");
      require(v >= 0.0f, ErrorCode::NegativeDepth, "depth map contains a negative value");
    }
  }
};

/// Where the plane of focus sits: an explicit distance or the scene median.
class FocusReference {
 public:
  static FocusReference median() { return FocusReference(std::nullopt); }
  static FocusReference at(double meters) {
    require(std::isfinite(meters) && meters >= 0.0, ErrorCode::NonPositiveInput,
            "focus distance must be finite and non-negative");
    return FocusReference(meters);
  }

  bool is_median() const noexcept { return !distance_; }
  std::optional<double> distance() const noexcept { return distance_; }

  friend bool operator==(const FocusReference&, const FocusReference&) = default;

 private:
  explicit FocusReference(std::optional<double> d) : distance_(d) {}
  std::optional<double> distance_;
};

struct ApertureSetting {
  double f_number = 2.0;
  double focal_length_mm = 50.0;
  std::optional<double> focus_distance_m;

  static constexpr double kMinFNumber = 1.0;
  static constexpr double kMaxFNumber = 32.0;
  static constexpr double kMinFocalMm = 28.0;
  static constexpr double kMaxFocalMm = 70.0;

  /// Hard bounds: throws NonPositiveInput for unusable values.
  void validate() const {
    require(std::isfinite(f_number) && f_number >= kMinFNumber && f_number <= kMaxFNumber,
            ErrorCode::NonPositiveInput, "f-number must lie in [1, 32]");
    require(std::isfinite(focal_length_mm) && focal_length_mm > 0.0, ErrorCode::NonPositiveInput,
            "focal length must be positive");
  }

  /// Focal lengths outside the 28-70mm capture range are accepted but flagged.
  bool focal_length_warning() const noexcept {
    return focal_length_mm < kMinFocalMm || focal_length_mm > kMaxFocalMm;
  }
};

// IEC 61966-2-1 piecewise transfer curve.
inline double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double v) {
  return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

enum class Transfer { srgb, linear };

/// Elementwise sRGB decode of an encoded image.
inline RasterImage decode_srgb(const RasterImage& img) {
  RasterImage out = img;
  for (float& v : out.data()) v = static_cast<float>(srgb_to_linear(v));
  return out;
}

inline RasterImage encode_srgb(const RasterImage& img) {
  RasterImage out = img;
  for (float& v : out.data()) v = static_cast<float>(linear_to_srgb(v));
  return out;
}

/// Exact median; the mean of the two central order statistics for even counts.
inline double median_depth(const DepthMap& d) {
  std::vector<float> v(d.data().begin(), d.data().end());
  require(!v.empty(), ErrorCode::NonPositiveInput, "median of an empty depth map");
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

inline double resolve_focus(const DepthMap& d, const FocusReference& focus) {
  return focus.is_median() ? median_depth(d) : *focus.distance();
}

}  // namespace bokeh
