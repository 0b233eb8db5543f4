#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "lgcp/error.hpp"
#include "lgcp/predict.hpp"
#include "support/tables.hpp"

using namespace lgcp;
using lgcp::testing::grid_table;

TEST(PixelIntensity, ZeroMeanZeroVariance) {
  const std::vector<double> m{0.0}, s{0.0};
  EXPECT_EQ(pixel_intensity(m, s, IntensityEstimator::PluginMean).lambda[0], 1.0);
  EXPECT_EQ(pixel_intensity(m, s, IntensityEstimator::LognormalMean).lambda[0], 1.0);
}

TEST(PixelIntensity, HalfVariance) {
  const std::vector<double> m{0.0}, s{std::sqrt(0.5)};
  EXPECT_DOUBLE_EQ(pixel_intensity(m, s, IntensityEstimator::PluginMean).lambda[0], 1.0);
  EXPECT_NEAR(pixel_intensity(m, s, IntensityEstimator::LognormalMean).lambda[0], 1.2840, 1e-4);
}

TEST(PixelIntensity, LognormalNeverBelowPlugin) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  std::vector<double> m(500), s(500);
  for (int i = 0; i < 500; ++i) {
    m[i] = 2 * nd(rng);
    s[i] = std::abs(nd(rng));
  }
  const auto a = pixel_intensity(m, s, IntensityEstimator::PluginMean);
  const auto b = pixel_intensity(m, s, IntensityEstimator::LognormalMean);
  for (int i = 0; i < 500; ++i) {
    EXPECT_GT(a.lambda[i], 0.0);
    EXPECT_GE(b.lambda[i], a.lambda[i]);
  }
}

TEST(Estimator, LabelsRoundTrip) {
  for (auto e : {IntensityEstimator::PluginMean, IntensityEstimator::LognormalMean})
    EXPECT_EQ(parse_estimator(to_string(e)), e);
  EXPECT_THROW(parse_estimator("median"), ConfigError);
}

TEST(Aggregate, SumsPixelIntensities) {
  PixelTable t = grid_table(3, 1, [](int, int) { return 7; });
  const IntensitySurface s{{0.1, 0.2, 0.3}, IntensityEstimator::PluginMean};
  const auto u = aggregate_intensity(s, make_partition(t, "unit"), t.count);
  ASSERT_EQ(u.lambda.size(), 1u);
  EXPECT_NEAR(u.lambda[0], 0.6, 1e-15);
}

TEST(Aggregate, OnePixelUnitsReproducePixels) {
  PixelTable t = grid_table(4, 3);
  for (std::size_t i = 0; i < t.size(); ++i) t.count[i] = static_cast<std::int64_t>(i % 3);
  IntensitySurface s;
  for (std::size_t i = 0; i < t.size(); ++i) s.lambda.push_back(0.05 * (i + 1));
  const auto u = aggregate_intensity(s, pixel_partition(t), t.count);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(u.lambda[i], s.lambda[i]);
    EXPECT_EQ(u.observed[i], t.count[i]);
  }
}

TEST(Aggregate, NestedPartitionsAndDisjointUnion) {
  PixelTable t = grid_table(12, 5, [](int x, int y) { return (x / 2) * 10 + y / 3; });
  for (std::size_t i = 0; i < t.size(); ++i) t.partitions["coarse"].push_back(static_cast<int>(t.x[i]) / 4);
  std::mt19937_64 rng(9);
  std::gamma_distribution<double> gd(0.5, 0.3);
  IntensitySurface s;
  for (std::size_t i = 0; i < t.size(); ++i) s.lambda.push_back(gd(rng));
  const auto fine_p = make_partition(t, "unit");
  const auto coarse_p = make_partition(t, "coarse");
  const auto fine = aggregate_intensity(s, fine_p, t.count);
  const auto nested = aggregate_nested(fine, fine_p, coarse_p);
  const auto direct = aggregate_intensity(s, coarse_p, t.count);
  double total = 0;
  for (double v : s.lambda) total += v;
  double ft = 0;
  for (double v : fine.lambda) ft += v;
  EXPECT_NEAR(ft / total, 1.0, 1e-9);
  for (std::size_t k = 0; k < direct.lambda.size(); ++k) {
    EXPECT_NEAR(nested.lambda[k], direct.lambda[k], 1e-9 * direct.lambda[k]);
    // Monotone: a coarse unit carries at least as much as any member.
    for (std::size_t j = 0; j < fine.lambda.size(); ++j) {
      const auto row = std::find(fine_p.unit_of_row.begin(), fine_p.unit_of_row.end(), static_cast<int>(j)) -
                       fine_p.unit_of_row.begin();
      if (coarse_p.unit_of_row[row] == static_cast<int>(k)) EXPECT_GE(nested.lambda[k], fine.lambda[j]);
    }
  }
  // Susceptibility of a unit equals one minus the product of pixel survival terms.
  for (std::size_t k = 0; k < direct.lambda.size(); ++k) {
    double prod = 1.0;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (coarse_p.unit_of_row[i] == static_cast<int>(k)) prod *= std::exp(-s.lambda[i]);
    EXPECT_NEAR(nested.susceptibility[k], 1.0 - prod, 1e-12);
  }
}

TEST(Aggregate, StraddlingUnitIsRejected) {
  PixelTable t = grid_table(4, 1, [](int x, int) { return x / 2; });
  t.partitions["coarse"] = {0, 0, 0, 1};
  IntensitySurface s{{1, 1, 1, 1}, IntensityEstimator::PluginMean};
  const auto fp = make_partition(t, "unit");
  const auto fine = aggregate_intensity(s, fp, t.count);
  EXPECT_THROW(aggregate_nested(fine, fp, make_partition(t, "coarse")), DataError);
}

TEST(Susceptibility, ClosedForms) {
  EXPECT_EQ(susceptibility(0.0), 0.0);
  EXPECT_NEAR(susceptibility(std::numbers::ln2), 0.5, 1e-15);
  EXPECT_NEAR(susceptibility(3.0), 0.95021, 1e-5);
  EXPECT_THROW(susceptibility(-0.1), DataError);
}

TEST(Susceptibility, IncreasingAndBelowOne) {
  // Beyond about 36 the value rounds to 1 in double precision.
  double prev = -1;
  for (double l = 0; l < 30; l += 0.01) {
    const double s = susceptibility(l);
    EXPECT_GT(s, prev);
    EXPECT_LT(s, 1.0);
    prev = s;
  }
}

TEST(AspectCurve, DueEast) {
  const auto c = aspect_effect_curve(1.0, 0.0, Eigen::Matrix2d::Identity() * 0.01);
  ASSERT_EQ(c.degrees.size(), 360u);
  const auto it = std::max_element(c.effect.begin(), c.effect.end());
  EXPECT_EQ(c.degrees[it - c.effect.begin()], 90.0);
  EXPECT_NEAR(*it, 1.0, 1e-12);
  EXPECT_NEAR(c.peak_degrees, 90.0, 1e-12);
}

TEST(AspectCurve, FlatWhenBothZero) {
  const auto c = aspect_effect_curve(0.0, 0.0, Eigen::Matrix2d::Zero());
  for (double v : c.effect) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(c.amplitude, 0.0);
}

TEST(AspectCurve, HarmonicAdditionAndBand) {
  const double be = -0.3, bn = 0.4;
  Eigen::Matrix2d cov;
  cov << 0.04, 0.01, 0.01, 0.09;
  const auto c = aspect_effect_curve(be, bn, cov);
  EXPECT_NEAR(c.amplitude, 0.5, 1e-12);
  const double phase = std::atan2(be, bn);
  for (std::size_t k = 0; k < c.degrees.size(); ++k) {
    const double a = c.degrees[k] * std::numbers::pi / 180.0;
    EXPECT_NEAR(c.effect[k], c.amplitude * std::cos(a - phase), 1e-12);
    const double var = std::sin(a) * std::sin(a) * 0.04 + std::cos(a) * std::cos(a) * 0.09 +
                       2 * std::sin(a) * std::cos(a) * 0.01;
    EXPECT_NEAR(c.sd[k], std::sqrt(var), 1e-12);
    EXPECT_NEAR(c.upper[k] - c.effect[k], 1.959964 * c.sd[k], 1e-5);
  }
  EXPECT_NEAR(c.peak_degrees, phase * 180.0 / std::numbers::pi + 360.0, 1e-9);
}
