#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <random>
#include <set>

#include "bokeh/inference.hpp"
#include "test_support.hpp"

using namespace bokeh;
using bokeh::testing::code_of;
using bokeh::testing::max_abs_diff;

namespace {

RasterImage probe_3x2() {
  // Every pixel distinct, so each group element gives a different image.
  return RasterImage(3, 2, 1, std::vector<float>{1, 2, 3, 4, 5, 6});
}

RasterImage flip_op(const RasterImage& x) { return apply_transform(x, DihedralTransform{0, true}); }

}  // namespace

TEST(Dihedral, Examples) {
  const RasterImage x = probe_3x2();
  EXPECT_EQ(apply_transform(x, DihedralTransform{}), x);
  const DihedralTransform half{2, false};
  EXPECT_EQ(apply_transform(apply_transform(x, half), half), x);
  const RasterImage ab(2, 1, 1, std::vector<float>{7, 9});
  EXPECT_EQ(apply_transform(ab, DihedralTransform{0, true}), RasterImage(2, 1, 1, std::vector<float>{9, 7}));
  const RasterImage r = apply_transform(x, DihedralTransform{1, false});
  EXPECT_EQ(r.width(), 2);
  EXPECT_EQ(r.height(), 3);
  // Counter-clockwise: the top-right pixel moves to the top-left.
  EXPECT_EQ(r.at(0, 0), 3.0f);
}

TEST(Dihedral, ExhaustiveCompositionTable) {
  const RasterImage x = probe_3x2();
  const auto group = all_dihedral_transforms();
  std::set<std::vector<float>> images;
  for (const auto& t : group) {
    const RasterImage y = apply_transform(x, t);
    images.insert(y.values());
    EXPECT_EQ(apply_transform(y, t.inverse()), x);
    int inverses = 0;
    for (const auto& u : group) inverses += (u.after(t) == DihedralTransform{});
    EXPECT_EQ(inverses, 1);
  }
  EXPECT_EQ(images.size(), 8u);
  for (const auto& a : group)
    for (const auto& b : group) {
      const DihedralTransform ab = b.after(a);
      EXPECT_NE(std::find(group.begin(), group.end(), ab), group.end());
      EXPECT_EQ(apply_transform(apply_transform(x, a), b), apply_transform(x, ab));
    }
}

TEST(Dihedral, DepthMovesWithImage) {
  const DepthMap d(3, 2, {1, 2, 3, 4, 5, 6});
  for (const auto& t : all_dihedral_transforms())
    EXPECT_EQ(apply_transform(d, t).values(), apply_transform(probe_3x2(), t).values());
}

TEST(Tta, IdentityPassthrough) {
  std::mt19937_64 rng(1);
  const RasterImage x = bokeh::testing::random_image(rng, 23, 17);
  EXPECT_LE(max_abs_diff(tta_ensemble([](const RasterImage& i) { return i; }, x), x), 1e-7f);
}

TEST(Tta, ConstantOperator) {
  std::mt19937_64 rng(2);
  const RasterImage x = bokeh::testing::random_image(rng, 9, 6);
  const RasterImage out = tta_ensemble([](const RasterImage& i) { return RasterImage(i.width(), i.height(), i.channels(), 0.3f); }, x);
  for (float v : out.data()) EXPECT_NEAR(v, 0.3f, 1e-7);
}

TEST(Tta, FlipOperatorMatchesEightBranchOracle) {
  std::mt19937_64 rng(3);
  const RasterImage x = bokeh::testing::random_image(rng, 7, 5);
  std::vector<double> acc(x.size(), 0.0);
  for (int k = 0; k < 4; ++k)
    for (bool f : {false, true}) {
      const DihedralTransform t{k, f};
      const RasterImage y = apply_transform(flip_op(apply_transform(x, t)), t.inverse());
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += y.data()[i];
    }
  const RasterImage out = tta_ensemble(flip_op, x);
  for (std::size_t i = 0; i < acc.size(); ++i) EXPECT_NEAR(out.data()[i], acc[i] / 8.0, 1e-6);
}

TEST(Tta, CommutesWithScalingForLinearOperator) {
  std::mt19937_64 rng(4);
  // A position-dependent linear op: mixes each pixel with its right neighbour.
  auto op = [](const RasterImage& i) {
    RasterImage o = i;
    for (int y = 0; y < i.height(); ++y)
      for (int x = 0; x + 1 < i.width(); ++x)
        for (int c = 0; c < i.channels(); ++c) o.at(x, y, c) = 0.7f * i.at(x, y, c) + 0.3f * i.at(x + 1, y, c);
    return o;
  };
  for (int trial = 0; trial < 10; ++trial) {
    const RasterImage x = bokeh::testing::random_image(rng, 12, 9);
    const float alpha = 0.25f + trial * 0.3f;
    RasterImage ax = x;
    for (float& v : ax.data()) v *= alpha;
    RasterImage lhs = tta_ensemble(op, ax);
    const RasterImage rhs = tta_ensemble(op, x);
    for (std::size_t i = 0; i < lhs.size(); ++i) ASSERT_NEAR(lhs.data()[i], alpha * rhs.data()[i], 1e-6);
  }
}

TEST(Tta, AuxDepthTransformedAlongside) {
  std::mt19937_64 rng(5);
  const RasterImage x = bokeh::testing::random_image(rng, 6, 4, 1);
  const DepthMap d = bokeh::testing::random_depth(rng, 6, 4);
  auto op = [](const RasterImage& i, const DepthMap& depth) {
    EXPECT_TRUE(i.same_extent(depth));
    RasterImage o = i;
    for (std::size_t p = 0; p < o.size(); ++p) o.data()[p] *= depth.data()[p];
    return o;
  };
  const RasterImage out = tta_ensemble(op, x, d);
  for (std::size_t p = 0; p < x.size(); ++p) EXPECT_NEAR(out.data()[p], x.data()[p] * d.data()[p], 1e-5);
  EXPECT_EQ(code_of([&] { tta_ensemble(op, x); }), ErrorCode::OperatorDimensionError);
}

TEST(Tta, RejectsShapeChangingOperator) {
  const RasterImage x(5, 4, 3, 0.5f);
  EXPECT_EQ(code_of([&] { tta_ensemble([](const RasterImage&) { return RasterImage(5, 4, 3); }, x); }),
            ErrorCode::OperatorDimensionError);
  EXPECT_EQ(code_of([&] { tta_ensemble([](const RasterImage& i) { return RasterImage(i.width(), i.height(), 1); }, x); }),
            ErrorCode::OperatorDimensionError);
}

TEST(Tta, BitIdenticalAcrossThreadCounts) {
  std::mt19937_64 rng(6);
  const RasterImage x = bokeh::testing::random_image(rng, 15, 11);
  ::setenv("BOKEH_THREADS", "1", 1);
  const RasterImage ref = tta_ensemble(flip_op, x);
  for (const char* n : {"2", "5", "8"}) {
    ::setenv("BOKEH_THREADS", n, 1);
    EXPECT_TRUE(tta_ensemble(flip_op, x) == ref);
  }
  ::unsetenv("BOKEH_THREADS");
}

TEST(Tiles, OriginsCoverEveryPixel) {
  EXPECT_EQ(tile_origins(2000, 896, 384), (std::vector<int>{0, 384, 768, 1104}));
  EXPECT_EQ(tile_origins(1500, 896, 384), (std::vector<int>{0, 384, 604}));
  EXPECT_EQ(tile_origins(10, 10, 3), (std::vector<int>{0}));
  EXPECT_EQ(tile_origins(10, 4, 4), (std::vector<int>{0, 4, 6}));
  const TileSpec defaults;
  EXPECT_EQ(defaults.tile_px, 896);
  EXPECT_EQ(defaults.stride_px, 384);
}

TEST(Tiles, PartitionOfUnity) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> tile(1, 64);
  std::uniform_int_distribution<int> size(1, 150);
  for (int trial = 0; trial < 50; ++trial) {
    const int t = tile(rng);
    const int s = std::uniform_int_distribution<int>(1, t)(rng);
    const int w = size(rng), h = size(rng);
    const Raster<double> cov = tile_weight_coverage(w, h, plan_tiles(w, h, {t, s}));
    for (double v : cov.data()) ASSERT_NEAR(v, 1.0, 1e-9) << t << "/" << s << " " << w << "x" << h;
  }
  const Raster<double> big = tile_weight_coverage(2000, 1500, plan_tiles(2000, 1500, {}));
  for (double v : big.data()) ASSERT_NEAR(v, 1.0, 1e-9);
}

TEST(Tiles, IdentityPassthrough) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> tile(2, 48);
  std::uniform_int_distribution<int> size(1, 120);
  auto id = [](const RasterImage& i) { return i; };
  for (int trial = 0; trial < 50; ++trial) {
    const int t = tile(rng);
    const int s = std::uniform_int_distribution<int>(1, t)(rng);
    const RasterImage x = bokeh::testing::random_image(rng, size(rng), size(rng));
    ASSERT_LE(max_abs_diff(tile_process(id, x, {t, s}), x), 1e-6f);
  }
  const RasterImage big = bokeh::testing::random_image(rng, 2000, 1500, 1);
  EXPECT_LE(max_abs_diff(tile_process(id, big, {896, 384}), big), 1e-6f);
}

TEST(Tiles, SingleTileCallsOpOnceExactly) {
  std::mt19937_64 rng(9);
  const RasterImage x = bokeh::testing::random_image(rng, 40, 30);
  std::atomic<int> calls{0};
  auto op = [&](const RasterImage& i) {
    ++calls;
    RasterImage o = i;
    for (float& v : o.data()) v = v * v;
    return o;
  };
  const RasterImage out = tile_process(op, x, {40, 10});
  EXPECT_EQ(calls.load(), 1);
  EXPECT_EQ(out, op(x));
}

TEST(Tiles, OversizedTileIsClippedNotFatal) {
  std::mt19937_64 rng(10);
  const RasterImage x = bokeh::testing::random_image(rng, 50, 20);
  ::testing::internal::CaptureStderr();
  const RasterImage out = tile_process([](const RasterImage& i) { return i; }, x, {896, 384});
  const std::string err = ::testing::internal::GetCapturedStderr();
  EXPECT_EQ(out, x);
  EXPECT_NE(err.find("warning"), std::string::npos);
  EXPECT_TRUE(plan_tiles(50, 20, {896, 384}).clipped);
}

TEST(Tiles, PointwiseOperatorWithDepthCommutesWithTiling) {
  std::mt19937_64 rng(11);
  const RasterImage x = bokeh::testing::random_image(rng, 70, 45);
  const DepthMap d = bokeh::testing::random_depth(rng, 70, 45);
  auto op = [](const RasterImage& i, const DepthMap& depth) {
    RasterImage o = i;
    for (int y = 0; y < i.height(); ++y)
      for (int xx = 0; xx < i.width(); ++xx)
        for (int c = 0; c < 3; ++c) o.at(xx, y, c) = i.at(xx, y, c) / depth.at(xx, y);
    return o;
  };
  const RasterImage tiled = tile_process(op, x, {32, 20}, d);
  EXPECT_LE(max_abs_diff(tiled, op(x, d)), 1e-6f);
}

TEST(Tiles, InvalidSpec) {
  const RasterImage x(8, 8, 1);
  auto id = [](const RasterImage& i) { return i; };
  EXPECT_EQ(code_of([&] { tile_process(id, x, {4, 5}); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { tile_process(id, x, {0, 0}); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { tile_process([](const RasterImage&) { return RasterImage(1, 1, 1); }, x, {4, 2}); }),
            ErrorCode::OperatorDimensionError);
}

TEST(AverageOutputs, Examples) {
  std::mt19937_64 rng(12);
  const RasterImage a = bokeh::testing::random_image(rng, 6, 5);
  const RasterImage b = bokeh::testing::random_image(rng, 6, 5);
  const std::vector<double> w11{1, 1};
  EXPECT_EQ(average_outputs(std::vector<RasterImage>{a, a}, w11), a);
  const RasterImage mean = average_outputs(std::vector<RasterImage>{a, b}, w11);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(mean.data()[i], (a.data()[i] + b.data()[i]) / 2, 1e-7);
  EXPECT_EQ(average_outputs(std::vector<RasterImage>{a, b}, std::vector<double>{2, 0}), a);

  EXPECT_EQ(code_of([&] { average_outputs(std::vector<RasterImage>{a, b}, std::vector<double>{0, 0}); }),
            ErrorCode::ZeroWeightSum);
  EXPECT_EQ(code_of([&] { average_outputs(std::vector<RasterImage>{a, b}, std::vector<double>{1, -1}); }),
            ErrorCode::InvalidWeight);
  EXPECT_EQ(code_of([&] { average_outputs(std::vector<RasterImage>{a, RasterImage(5, 5, 3)}, w11); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([&] { average_outputs(std::vector<RasterImage>{a}, w11); }), ErrorCode::DimensionMismatch);
}

TEST(AverageOutputs, PermutationInvariant) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> wu(0.0, 3.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<RasterImage> outs;
    std::vector<double> ws;
    for (int i = 0; i < 5; ++i) {
      outs.push_back(bokeh::testing::random_image(rng, 4, 4));
      ws.push_back(wu(rng));
    }
    const RasterImage ref = average_outputs(outs, ws);
    std::vector<std::size_t> perm{0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<RasterImage> po;
    std::vector<double> pw;
    for (std::size_t p : perm) {
      po.push_back(outs[p]);
      pw.push_back(ws[p]);
    }
    ASSERT_LE(max_abs_diff(average_outputs(po, pw), ref), 1e-6f);
  }
}
