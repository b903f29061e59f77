#pragma once

// Brute-force reference implementations written independently of the
// library's separable and accumulated code paths.

#include <cmath>
#include <vector>

#include "bokeh/raster.hpp"

namespace bokeh::testing {

inline double psnr_oracle(const RasterImage& a, const RasterImage& b) {
  long double sum = 0.0L;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      for (int c = 0; c < a.channels(); ++c) {
        const long double d = static_cast<long double>(a.at(x, y, c)) - static_cast<long double>(b.at(x, y, c));
        sum += d * d;
      }
  const long double mse = sum / (static_cast<long double>(a.width()) * a.height() * a.channels());
  return static_cast<double>(-10.0L * std::log10(mse));
}

// Windowed SSIM with a full 2D Gaussian and centered second moments.
inline double ssim_oracle(const RasterImage& a, const RasterImage& b) {
  constexpr int n = 11;
  const double sigma = 1.5;
  double w[n][n];
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * sigma * sigma));
      total += w[i][j];
    }
  for (auto& row : w)
    for (double& v : row) v /= total;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    double chan = 0.0;
    int windows = 0;
    for (int y0 = 0; y0 + n <= a.height(); ++y0)
      for (int x0 = 0; x0 + n <= a.width(); ++x0) {
        double mx = 0, my = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            mx += w[i][j] * a.at(x0 + j, y0 + i, c);
            my += w[i][j] * b.at(x0 + j, y0 + i, c);
          }
        double vx = 0, vy = 0, cxy = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            const double dx = a.at(x0 + j, y0 + i, c) - mx;
            const double dy = b.at(x0 + j, y0 + i, c) - my;
            vx += w[i][j] * dx * dx;
            vy += w[i][j] * dy * dy;
            cxy += w[i][j] * dx * dy;
          }
        chan += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
    acc += chan / windows;
  }
  return acc / a.channels();
}

}  // namespace bokeh::testing
