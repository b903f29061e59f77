#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "bokeh/renderer.hpp"
#include "test_support.hpp"

using namespace bokeh;
using bokeh::testing::code_of;
using bokeh::testing::max_abs_diff;

namespace {

// Direct correlation with one kernel: out(q) = sum_p k(q - p) in(p).
RasterImage convolve_oracle(const RasterImage& in, const PsfKernel& k) {
  RasterImage out(in.width(), in.height(), in.channels(), 0.0f);
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x)
      for (int c = 0; c < in.channels(); ++c) {
        double s = 0.0;
        for (int dy = -k.half; dy <= k.half; ++dy)
          for (int dx = -k.half; dx <= k.half; ++dx) {
            const int sx = x - dx, sy = y - dy;
            if (sx < 0 || sy < 0 || sx >= in.width() || sy >= in.height()) continue;
            s += k.at(dx, dy) * in.at(sx, sy, c);
          }
        out.at(x, y, c) = static_cast<float>(s);
      }
  return out;
}

// Subject block at depth 2 in front of a background at depth 6.
DepthMap two_plane_depth(int w, int h) {
  DepthMap d(w, h, 6.0f);
  for (int y = h / 4; y < 3 * h / 4; ++y)
    for (int x = w / 4; x < 3 * w / 4; ++x) d.at(x, y) = 2.0f;
  return d;
}

class ScopedThreads {
 public:
  explicit ScopedThreads(const char* n) { ::setenv("BOKEH_THREADS", n, 1); }
  ~ScopedThreads() { ::unsetenv("BOKEH_THREADS"); }
};

}  // namespace

TEST(HighlightBoost, Examples) {
  const RasterImage img(3, 1, 1, std::vector<float>{0.2f, 0.9f, 0.95f});
  EXPECT_EQ(highlight_boost(img, 1.0, 0.9), img);
  const RasterImage b = highlight_boost(img, 4.0, 0.9);
  EXPECT_EQ(b.at(0, 0), 0.2f);
  EXPECT_EQ(b.at(1, 0), 0.9f);
  EXPECT_NEAR(b.at(2, 0), 1.1, 1e-6);
  EXPECT_NEAR(highlight_unboost(b, 4.0, 0.9).at(2, 0), 0.95, 1e-6);
  EXPECT_EQ(code_of([&] { highlight_boost(img, 4.0, 1.0); }), ErrorCode::InvalidKnee);
  EXPECT_EQ(code_of([&] { highlight_boost(img, 4.0, -0.1); }), ErrorCode::InvalidKnee);
  EXPECT_EQ(code_of([&] { highlight_boost(img, 0.5, 0.9); }), ErrorCode::InvalidGain);
}

TEST(HighlightBoost, KneeIsFixedPointForAnyGain) {
  for (double gain : {1.0, 2.0, 7.5, 100.0}) {
    const RasterImage img(1, 1, 1, std::vector<float>{0.75f});
    EXPECT_EQ(highlight_boost(img, gain, 0.75).at(0, 0), 0.75f);
  }
}

TEST(RenderConfig, JsonRoundTripAndValidation) {
  const auto cfg = RenderConfig::from_json(nlohmann::json::parse(
      R"({"blade_count": 6, "blade_rotation_rad": 0.5, "max_radius_px": null, "highlight_gain": 2,
          "highlight_knee": 0.8, "layer_count": 4, "focus_ref": 3.5})"));
  EXPECT_EQ(cfg.blade_count, 6);
  EXPECT_FALSE(cfg.max_radius_px.has_value());
  EXPECT_EQ(cfg.focus_ref, FocusReference::at(3.5));
  const auto again = RenderConfig::from_json(cfg.to_json());
  EXPECT_EQ(again.to_json(), cfg.to_json());

  const auto defaults = RenderConfig::from_json(nlohmann::json::object());
  EXPECT_EQ(defaults.blade_count, 0);
  EXPECT_EQ(defaults.highlight_gain, 4.0);
  EXPECT_EQ(defaults.highlight_knee, 0.9);
  EXPECT_EQ(defaults.layer_count, 8);
  EXPECT_TRUE(defaults.focus_ref.is_median());
  EXPECT_TRUE(RenderConfig::from_json(nlohmann::json{{"focus_ref", "median"}}).focus_ref.is_median());

  auto parse = [](const char* s) { return RenderConfig::from_json(nlohmann::json::parse(s)); };
  EXPECT_EQ(code_of([&] { parse(R"({"blur": 3})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { parse(R"({"focus_ref": "near"})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { parse(R"({"layer_count": "eight"})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { parse(R"({"layer_count": 0})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { parse(R"({"layer_count": 65})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { parse(R"({"highlight_knee": 1.0})"); }), ErrorCode::InvalidKnee);
  EXPECT_EQ(code_of([&] { parse(R"({"highlight_gain": 0.5})"); }), ErrorCode::InvalidGain);
  EXPECT_EQ(code_of([&] { parse(R"({"blade_count": 4})"); }), ErrorCode::InvalidBladeCount);
  EXPECT_EQ(code_of([&] { parse(R"([1, 2])"); }), ErrorCode::InvalidConfig);
}

TEST(AssignLayers, EqualPopulationNearestFirst) {
  std::vector<float> v;
  for (int i = 0; i < 16; ++i) v.push_back(static_cast<float>(i));
  const DepthMap d(16, 1, v);
  const auto layers = assign_layers(d, 0.0, 4);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(layers[i], i / 4) << i;
  for (int l : assign_layers(DepthMap(5, 5, 1.0f), 0.0, 8)) EXPECT_EQ(l, 0);
}

TEST(AssignLayers, TiesShareALayer) {
  const DepthMap d(6, 1, {1, 1, 1, 1, 1, 9});
  const auto layers = assign_layers(d, 1.0, 3);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(layers[i], layers[0]);
  EXPECT_GT(layers[5], layers[0]);
}

TEST(DefocusRadius, ZeroAtOrAboveReferenceAperture) {
  std::mt19937_64 rng(8);
  const DepthMap d = bokeh::testing::random_depth(rng, 20, 20);
  for (double f : {22.0, 28.0, 32.0}) {
    const RadiusMap r = defocus_radius_map(d, f, 3.0, 32.0);
    for (double v : r.data()) EXPECT_EQ(v, 0.0);
  }
  const RadiusMap wide = defocus_radius_map(d, 2.0, 3.0, 32.0);
  double total = 0.0;
  for (double v : wide.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 32.0);
    total += v;
  }
  EXPECT_GT(total, 0.0);
}

TEST(LayeredScatter, SingleWhitePixelMatchesDirectConvolution) {
  for (double r : {1.5, 3.0, 6.25}) {
    RasterImage img(41, 41, 1, 0.0f);
    img.at(20, 20) = 1.0f;
    const RadiusMap radius(Raster<double>(41, 41, 1, r));
    const RasterImage out = layered_scatter(img, std::vector<int>(41 * 41, 0), radius, {1, 0, 0.0});
    const RasterImage oracle = convolve_oracle(img, make_psf(r));
    EXPECT_LE(max_abs_diff(out, oracle), 1e-6f) << r;
    double mass = 0.0;
    for (float v : out.data()) mass += v;
    EXPECT_NEAR(mass, 1.0, 1e-5) << r;
    // Support is the disk of radius r, up to the antialiased rim.
    for (int y = 0; y < 41; ++y)
      for (int x = 0; x < 41; ++x) {
        if (std::hypot(x - 20, y - 20) > r + 1.0) {
          EXPECT_EQ(out.at(x, y), 0.0f);
        }
      }
    EXPECT_GT(out.at(20, 20), 0.0f);
  }
}

TEST(LayeredScatter, RejectsBadInputs) {
  const RasterImage img(4, 4, 1);
  const RadiusMap r(Raster<double>(4, 4, 1, 0.0));
  EXPECT_EQ(code_of([&] { layered_scatter(img, std::vector<int>(15, 0), r, {1, 0, 0.0}); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([&] { layered_scatter(img, std::vector<int>(16, 2), r, {2, 0, 0.0}); }),
            ErrorCode::InvalidConfig);
  const RadiusMap small(Raster<double>(3, 4, 1, 0.0));
  EXPECT_EQ(code_of([&] { layered_scatter(img, std::vector<int>(16, 0), small, {1, 0, 0.0}); }),
            ErrorCode::DimensionMismatch);
}

TEST(LayeredScatter, EnergyPreservedForConstantDepth) {
  std::mt19937_64 rng(21);
  const RasterImage img = bokeh::testing::random_image(rng, 128, 96, 3);
  const RadiusMap radius(Raster<double>(128, 96, 1, 4.0));
  const RasterImage out = layered_scatter(img, std::vector<int>(128 * 96, 0), radius, {1, 0, 0.0});
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    a += img.data()[i];
    b += out.data()[i];
  }
  EXPECT_NEAR(a / double(img.size()), b / double(img.size()), 1e-3);
}

TEST(RenderBokeh, ReferenceApertureReproducesInput) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const RasterImage img = bokeh::testing::random_image(rng, 48, 32, 3);
    const DepthMap d = bokeh::testing::random_depth(rng, 48, 32);
    for (double f : {22.0, 32.0}) {
      const RasterImage out = render_bokeh(img, d, {f, 50.0, std::nullopt}, RenderConfig{});
      EXPECT_LE(max_abs_diff(out, img), 1.0f / 255.0f);
    }
  }
}

TEST(RenderBokeh, ConstantImageStaysConstant) {
  std::mt19937_64 rng(32);
  for (float c : {0.0f, 0.3f, 0.95f, 1.0f}) {
    const RasterImage img(40, 30, 3, c);
    const DepthMap d = bokeh::testing::random_depth(rng, 40, 30);
    for (double f : {2.0, 5.6}) {
      RenderConfig cfg;
      cfg.blade_count = f < 3 ? 0 : 7;
      const RasterImage out = render_bokeh(img, d, {f, 50.0, std::nullopt}, cfg);
      for (float v : out.data()) ASSERT_NEAR(v, c, 1e-4) << c << " f/" << f;
    }
  }
}

TEST(RenderBokeh, WhitePixelThroughFullPipeline) {
  // Constant off-focus depth: one layer, one radius, no highlight gain.
  RasterImage img(61, 61, 1, 0.0f);
  img.at(30, 30) = 1.0f;
  const DepthMap d(61, 61, 5.0f);
  RenderConfig cfg;
  cfg.highlight_gain = 1.0;
  cfg.focus_ref = FocusReference::at(4.0);
  cfg.max_radius_px = 10.0;
  const RasterImage out = render_bokeh(img, d, {2.0, 50.0, std::nullopt}, cfg);
  const double r = defocus_radius_map(d, 2.0, 4.0, 10.0).at(0, 0);
  EXPECT_GT(r, 4.0);
  const RasterImage oracle = convolve_oracle(img, make_psf(std::round(r * 8) / 8));
  EXPECT_LE(max_abs_diff(decode_srgb(out), oracle), 1e-5f);
}

TEST(RenderBokeh, InFocusSubjectStaysSharp) {
  std::mt19937_64 rng(33);
  const RasterImage img = bokeh::testing::random_image(rng, 64, 48, 3);
  const DepthMap d = two_plane_depth(64, 48);
  RenderConfig cfg;
  cfg.focus_ref = FocusReference::at(2.0);
  const RasterImage out = render_bokeh(img, d, {2.0, 50.0, std::nullopt}, cfg);
  const CoCMap coc = coc_map(d, 2.0, cfg.focus_ref);
  int checked = 0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      if (coc.at(x, y) != 0.0) continue;
      ++checked;
      for (int c = 0; c < 3; ++c) ASSERT_NEAR(out.at(x, y, c), img.at(x, y, c), 2.0 / 255.0);
    }
  EXPECT_EQ(checked, 32 * 24);
  // The background did get blurred.
  EXPECT_GT(max_abs_diff(out, img), 0.1f);
}

TEST(RenderBokeh, BitIdenticalAcrossThreadCounts) {
  std::mt19937_64 rng(34);
  const RasterImage img = bokeh::testing::random_image(rng, 57, 43, 3);
  const DepthMap d = bokeh::testing::random_depth(rng, 57, 43);
  RasterImage ref;
  {
    ScopedThreads t("1");
    ref = render_bokeh(img, d, {2.8, 50.0, std::nullopt}, RenderConfig{});
  }
  for (const char* n : {"2", "3", "7"}) {
    ScopedThreads t(n);
    EXPECT_TRUE(render_bokeh(img, d, {2.8, 50.0, std::nullopt}, RenderConfig{}) == ref) << n;
  }
}

TEST(RenderBokeh, Errors) {
  const RasterImage img(8, 8, 3);
  EXPECT_EQ(code_of([&] { render_bokeh(img, DepthMap(8, 7, 1.0f), {2.0, 50.0, {}}, {}); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([&] { render_bokeh(img, DepthMap(8, 8, 1.0f), {0.0, 50.0, {}}, {}); }),
            ErrorCode::NonPositiveInput);
  RenderConfig bad;
  bad.layer_count = 0;
  EXPECT_EQ(code_of([&] { render_bokeh(img, DepthMap(8, 8, 1.0f), {2.0, 50.0, {}}, bad); }),
            ErrorCode::InvalidConfig);
}

TEST(ComposeRefinement, Examples) {
  const RasterImage coarse(2, 2, 1, 0.5f);
  const RasterImage residual(2, 2, 1, 0.2f);
  EXPECT_EQ(compose_refinement(coarse, residual, FocusWeights(Raster<double>(2, 2, 1, 1.0))), coarse);
  EXPECT_EQ(compose_refinement(coarse, RasterImage(2, 2, 1, 0.0f), FocusWeights(Raster<double>(2, 2, 1, 0.3))),
            coarse);
  const RasterImage out = compose_refinement(coarse, residual, FocusWeights(Raster<double>(2, 2, 1, 0.25)));
  for (float v : out.data()) EXPECT_NEAR(v, 0.65, 1e-7);
  const RasterImage hot = compose_refinement(RasterImage(1, 1, 1, 0.9f), RasterImage(1, 1, 1, 0.5f),
                                             FocusWeights(Raster<double>(1, 1, 1, 0.0)));
  EXPECT_EQ(hot.at(0, 0), 1.0f);
  EXPECT_EQ(code_of([&] { compose_refinement(coarse, RasterImage(2, 1, 1), FocusWeights(Raster<double>(2, 2, 1))); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([&] { compose_refinement(coarse, residual, FocusWeights(Raster<double>(3, 2, 1))); }),
            ErrorCode::DimensionMismatch);
}

TEST(ComposeRefinement, LinearInResidual) {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<float> u(-0.1f, 0.1f);
  std::uniform_real_distribution<double> wu(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    RasterImage coarse(9, 9, 3, 0.5f), r1(9, 9, 3), r2(9, 9, 3), sum(9, 9, 3);
    for (std::size_t i = 0; i < r1.size(); ++i) {
      r1.data()[i] = u(rng);
      r2.data()[i] = u(rng);
      sum.data()[i] = r1.data()[i] + r2.data()[i];
    }
    Raster<double> w(9, 9, 1);
    for (double& v : w.data()) v = wu(rng);
    const FocusWeights fw(w);
    const RasterImage a = compose_refinement(coarse, r1, fw);
    const RasterImage b = compose_refinement(coarse, r2, fw);
    const RasterImage s = compose_refinement(coarse, sum, fw);
    for (std::size_t i = 0; i < s.size(); ++i)
      ASSERT_NEAR(s.data()[i] - 0.5, (a.data()[i] - 0.5) + (b.data()[i] - 0.5), 1e-6);
  }
}

TEST(FocusWeights, Examples) {
  const CoCMap c(Raster<double>(4, 1, 1, std::vector<double>{0.0, 0.05, 0.1, 0.7}));
  const FocusWeights w = focus_weights_from_coc(c, 0.1);
  EXPECT_EQ(w.at(0, 0), 1.0);
  EXPECT_NEAR(w.at(1, 0), 0.5, 1e-15);
  EXPECT_EQ(w.at(2, 0), 0.0);
  EXPECT_EQ(w.at(3, 0), 0.0);
  EXPECT_EQ(focus_weights_from_coc(c).at(1, 0), 0.0);  // default threshold 0.05
  for (double t : {0.0, 1.0, -0.2, 1.5}) EXPECT_EQ(code_of([&] { focus_weights_from_coc(c, t); }), ErrorCode::InvalidThreshold);
}

TEST(RenderBokeh, BackgroundSharpnessFallsWithAperture) {
  // Checkerboard behind an in-focus block; Laplacian variance of the
  // background must not increase as the aperture opens.
  const int W = 96, H = 72;
  RasterImage img(W, H, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) img.at(x, y) = ((x / 3 + y / 3) % 2) ? 0.8f : 0.2f;
  DepthMap d(W, H, 3.0f);
  for (int y = 24; y < 48; ++y)
    for (int x = 32; x < 64; ++x) d.at(x, y) = 2.0f;
  RenderConfig cfg;
  cfg.focus_ref = FocusReference::at(2.0);
  double prev = INFINITY;
  for (double f : {22.0, 14.0, 8.0, 4.0, 2.0}) {
    const RasterImage out = render_bokeh(img, d, {f, 50.0, std::nullopt}, cfg);
    double s = 0.0, s2 = 0.0;
    int n = 0;
    for (int y = 1; y < H - 1; ++y)
      for (int x = 1; x < W - 1; ++x) {
        if (y >= 16 && y < 56 && x >= 24 && x < 72) continue;
        const double lap = 4.0 * out.at(x, y) - out.at(x - 1, y) - out.at(x + 1, y) - out.at(x, y - 1) - out.at(x, y + 1);
        s += lap;
        s2 += lap * lap;
        ++n;
      }
    const double var = s2 / n - (s / n) * (s / n);
    EXPECT_LE(var, prev) << "f/" << f;
    prev = var;
  }
}
