#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "bokeh/raster.hpp"

namespace bokeh::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("bokeh_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline RasterImage random_image(std::mt19937_64& rng, int w, int h, int ch = 3) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  RasterImage img(w, h, ch);
  for (float& v : img.data()) v = u(rng);
  return img;
}

inline DepthMap random_depth(std::mt19937_64& rng, int w, int h, float lo = 0.5f, float hi = 10.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(static_cast<std::size_t>(w) * h);
  for (float& x : v) x = u(rng);
  return DepthMap(w, h, std::move(v));
}

// Image values on the 8-bit grid, so PNG round trips are lossless.
inline RasterImage random_quantized_image(std::mt19937_64& rng, int w, int h, int ch = 3) {
  std::uniform_int_distribution<int> u(0, 255);
  RasterImage img(w, h, ch);
  for (float& v : img.data()) v = static_cast<float>(u(rng)) / 255.0f;
  return img;
}

inline float max_abs_diff(const Raster<float>& a, const Raster<float>& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace bokeh::testing
