#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cridiff/metrics.hpp"
#include "oracles.hpp"

using cridiff::Mask;
namespace metrics = cridiff::metrics;

namespace {

Mask with_pixels(int h, int w, std::initializer_list<std::pair<int, int>> on) {
  Mask m(h, w);
  for (const auto& [r, c] : on) m(r, c) = 1;
  return m;
}

Mask shifted(const Mask& m, int dr, int dc, int h, int w) {
  Mask out(h, w);
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      if (m(r, c)) out(r + dr, c + dc) = 1;
    }
  }
  return out;
}

}  // namespace

TEST(Overlap, IdenticalAndDisjoint) {
  const auto a = with_pixels(4, 4, {{0, 0}, {1, 1}});
  const auto b = with_pixels(4, 4, {{3, 3}});
  EXPECT_EQ(metrics::dice(a, a), 1.0);
  EXPECT_EQ(metrics::iou(a, a), 1.0);
  EXPECT_EQ(metrics::dice(a, b), 0.0);
  EXPECT_EQ(metrics::iou(a, b), 0.0);
}

TEST(Overlap, CountingExample) {
  // |P| = |G| = 4 with 2 shared pixels: union 6.
  const auto p = with_pixels(4, 4, {{0, 0}, {0, 1}, {0, 2}, {0, 3}});
  const auto g = with_pixels(4, 4, {{0, 2}, {0, 3}, {1, 0}, {1, 1}});
  EXPECT_DOUBLE_EQ(metrics::dice(p, g), 0.5);
  EXPECT_DOUBLE_EQ(metrics::iou(p, g), 1.0 / 3.0);
}

TEST(Overlap, BothEmptyScoreOne) {
  EXPECT_EQ(metrics::dice(Mask(3, 3), Mask(3, 3)), 1.0);
  EXPECT_EQ(metrics::iou(Mask(3, 3), Mask(3, 3)), 1.0);
}

TEST(Overlap, ShapeMismatchThrows) {
  EXPECT_THROW(metrics::dice(Mask(3, 3), Mask(3, 4)), std::invalid_argument);
  EXPECT_THROW(metrics::hausdorff(Mask(3, 3), Mask(4, 3)), std::invalid_argument);
}

TEST(Overlap, DiceIouIdentity) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 500; ++k) {
    const auto a = oracle::random_mask(10, 10, rng, 0.4);
    const auto b = oracle::random_mask(10, 10, rng, 0.4);
    const double i = metrics::iou(a, b);
    EXPECT_NEAR(metrics::dice(a, b), 2 * i / (1 + i), 1e-9);
    const int inter = oracle::overlap(a, b), sum = oracle::count(a) + oracle::count(b);
    if (sum > 0) EXPECT_DOUBLE_EQ(metrics::dice(a, b), 2.0 * inter / sum);
  }
}

TEST(Boundary, SmallCases) {
  const auto single = with_pixels(5, 5, {{2, 3}});
  ASSERT_EQ(metrics::boundary_pixels(single).size(), 1u);
  EXPECT_EQ(metrics::boundary_pixels(single)[0], (metrics::Pixel{2, 3}));

  Mask solid(5, 5);
  for (int r = 1; r <= 3; ++r) {
    for (int c = 1; c <= 3; ++c) solid(r, c) = 1;
  }
  const auto ring = metrics::boundary_pixels(solid);
  EXPECT_EQ(ring.size(), 8u);
  EXPECT_EQ(std::count(ring.begin(), ring.end(), metrics::Pixel{2, 2}), 0);
}

TEST(Boundary, MatchesNeighbourScan) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 100; ++k) {
    const auto m = oracle::random_mask(8, 8, rng, 0.6);
    const auto got = metrics::boundary_pixels(m);
    const auto want = oracle::boundary(m);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].row, want[i].r);
      EXPECT_EQ(got[i].col, want[i].c);
    }
  }
}

TEST(SurfaceDistance, IdenticalIsZero) {
  std::mt19937_64 rng(3);
  const auto m = oracle::random_blob_mask(12, 12, rng);
  EXPECT_EQ(*metrics::hausdorff(m, m), 0.0);
  EXPECT_EQ(*metrics::average_surface_distance(m, m), 0.0);
}

TEST(SurfaceDistance, ThreeFourFive) {
  const auto a = with_pixels(6, 6, {{0, 0}});
  const auto b = with_pixels(6, 6, {{3, 4}});
  EXPECT_DOUBLE_EQ(*metrics::hausdorff(a, b), 5.0);
  EXPECT_DOUBLE_EQ(*metrics::average_surface_distance(a, b), 5.0);
}

TEST(SurfaceDistance, UndefinedWhenOneSideEmpty) {
  const auto a = with_pixels(4, 4, {{1, 1}});
  EXPECT_FALSE(metrics::hausdorff(a, Mask(4, 4)).has_value());
  EXPECT_FALSE(metrics::average_surface_distance(Mask(4, 4), a).has_value());
  EXPECT_EQ(*metrics::hausdorff(Mask(4, 4), Mask(4, 4)), 0.0);
  EXPECT_TRUE(metrics::evaluate(a, Mask(4, 4)).surface_undefined());
}

TEST(SurfaceDistance, MatchesAllPairs) {
  std::mt19937_64 rng(4);
  int compared = 0;
  while (compared < 200) {
    const auto a = oracle::random_mask(10, 10, rng, 0.35);
    const auto b = oracle::random_mask(10, 10, rng, 0.35);
    if (!oracle::count(a) || !oracle::count(b)) continue;
    ASSERT_DOUBLE_EQ(*metrics::hausdorff(a, b), oracle::hausdorff(a, b));
    ASSERT_NEAR(*metrics::average_surface_distance(a, b), oracle::average_surface_distance(a, b), 1e-12);
    ++compared;
  }
}

TEST(SurfaceDistance, Symmetric) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 50; ++k) {
    const auto a = oracle::random_blob_mask(12, 12, rng);
    const auto b = oracle::random_blob_mask(12, 12, rng);
    EXPECT_EQ(*metrics::hausdorff(a, b), *metrics::hausdorff(b, a));
    EXPECT_DOUBLE_EQ(*metrics::average_surface_distance(a, b), *metrics::average_surface_distance(b, a));
  }
}

TEST(SurfaceDistance, TranslationInvariant) {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 30; ++k) {
    const auto a = oracle::random_blob_mask(10, 10, rng);
    const auto b = oracle::random_blob_mask(10, 10, rng);
    const auto ta = shifted(a, 3, 2, 16, 16), tb = shifted(b, 3, 2, 16, 16);
    // Shifting inward from the edge changes which pixels touch the frame,
    // so compare masks already placed away from it.
    const auto pa = shifted(a, 1, 1, 16, 16), pb = shifted(b, 1, 1, 16, 16);
    EXPECT_DOUBLE_EQ(metrics::dice(pa, pb), metrics::dice(ta, tb));
    EXPECT_DOUBLE_EQ(metrics::iou(pa, pb), metrics::iou(ta, tb));
    EXPECT_DOUBLE_EQ(*metrics::hausdorff(pa, pb), *metrics::hausdorff(ta, tb));
    EXPECT_NEAR(*metrics::average_surface_distance(pa, pb), *metrics::average_surface_distance(ta, tb), 1e-12);
  }
}

TEST(SurfaceDistance, PercentileNeverExceedsMaximum) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 30; ++k) {
    const auto a = oracle::random_blob_mask(16, 16, rng);
    const auto b = oracle::random_blob_mask(16, 16, rng);
    EXPECT_LE(*metrics::hausdorff(a, b, 95.0), *metrics::hausdorff(a, b));
  }
  EXPECT_THROW(metrics::hausdorff(Mask(2, 2), Mask(2, 2), 0.0), std::invalid_argument);
}

TEST(Summary, ExcludesUndefinedDistances) {
  std::vector<metrics::MetricReport> reports(3);
  reports[0] = {0.8, 0.6, 2.0, 1.0};
  reports[1] = {0.6, 0.4, 4.0, 3.0};
  reports[2] = {0.0, 0.0, std::nullopt, std::nullopt};
  const auto s = metrics::summarize(reports);
  EXPECT_EQ(s.cases, 3);
  EXPECT_EQ(s.undefined_count, 1);
  EXPECT_DOUBLE_EQ(s.dsc, (0.8 + 0.6 + 0.0) / 3);
  EXPECT_DOUBLE_EQ(s.iou, 1.0 / 3);
  EXPECT_DOUBLE_EQ(s.hsd, 3.0);
  EXPECT_DOUBLE_EQ(s.asd, 2.0);
}
