#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "lgcp/csv.hpp"
#include "lgcp/error.hpp"
#include "lgcp/ingest.hpp"

using namespace lgcp;

namespace {

TableSchema basic_schema() {
  return {{{"slope", CovariateRole::Linear, 0}, {"mi", CovariateRole::BinnedRw1, 20},
           {"lith", CovariateRole::CategoricalIid, 0}},
          {"slope_unit"}};
}

const char* kThreeRows =
    "pixel_id,x,y,count,slope,mi,lith,slope_unit\n"
    "1,0,0,0,10.5,6,a,1\n"
    "2,1,0,1,11.5,7,b,1\n"
    "3,2,0,2,9.25,8,a,2\n";

PixelTable grid_table(int w, int h, const std::function<std::int64_t(int, int)>& unit) {
  PixelTable t;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      t.pixel_id.push_back(y * w + x + 1);
      t.x.push_back(x);
      t.y.push_back(y);
      t.count.push_back(0);
      t.partitions["u"].push_back(unit(x, y));
    }
  return t;
}

}  // namespace

TEST(LoadPixelTable, TotalCountOfThreeRows) {
  const PixelTable t = parse_pixel_table(kThreeRows, basic_schema());
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t.total_count(), 3);
  EXPECT_EQ(t.labels("lith")[1], "b");
  EXPECT_DOUBLE_EQ(t.covariate("slope")[2], 9.25);
}

TEST(LoadPixelTable, MissingPartitionColumnNamesIt) {
  const std::string text = "pixel_id,x,y,count,slope,mi,lith\n1,0,0,0,1,1,a\n";
  try {
    parse_pixel_table(text, basic_schema());
    FAIL() << "expected a schema error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("slope_unit"), std::string::npos);
  }
}

TEST(LoadPixelTable, NegativeCountReportsLine) {
  const std::string text = "pixel_id,x,y,count\n1,0,0,0\n2,1,0,-1\n";
  try {
    parse_pixel_table(text, {});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadPixelTable, DuplicateIdAndNonNumeric) {
  EXPECT_THROW(parse_pixel_table("pixel_id,x,y,count\n1,0,0,0\n1,1,0,0\n", {}), DataError);
  EXPECT_THROW(parse_pixel_table("pixel_id,x,y,count,slope\n1,0,0,0,abc\n",
                                 {{{"slope", CovariateRole::Linear, 0}}, {}}),
               DataError);
  EXPECT_THROW(parse_pixel_table("pixel_id,x,y,count,slope\n1,0,0,0,nan\n",
                                 {{{"slope", CovariateRole::Linear, 0}}, {}}),
               DataError);
}

TEST(LoadPixelTable, WriteReloadRoundTripIsExact) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0, 1e3);
  PixelTable t = parse_pixel_table(kThreeRows, basic_schema());
  for (double& v : t.continuous["slope"]) v = nd(rng) / 7.0;
  const auto path = std::filesystem::temp_directory_path() / "lgcp_roundtrip.csv";
  write_pixel_table(path, t, "test provenance");
  const PixelTable back = load_pixel_table(path, basic_schema());
  EXPECT_EQ(back.count, t.count);
  EXPECT_EQ(back.continuous, t.continuous);
  EXPECT_EQ(back.categorical, t.categorical);
  EXPECT_EQ(back.partitions, t.partitions);
  std::filesystem::remove(path);
}

TEST(Standardize, SymmetricColumn) {
  PixelTable t = grid_table(3, 1, [](int, int) { return 1; });
  t.continuous["c"] = {1, 2, 3};
  const auto s = standardize_covariates(t, {{"c", CovariateRole::Linear, 0}});
  ASSERT_EQ(s.params.size(), 1u);
  EXPECT_DOUBLE_EQ(s.params[0].mean, 2.0);
  EXPECT_DOUBLE_EQ(s.params[0].sd, 1.0);
  EXPECT_EQ(s.table.covariate("c"), (std::vector<double>{-1, 0, 1}));
}

TEST(Standardize, ZeroVarianceNamesCovariate) {
  PixelTable t = grid_table(3, 1, [](int, int) { return 1; });
  t.continuous["flat"] = {5, 5, 5};
  try {
    standardize_covariates(t, {{"flat", CovariateRole::Linear, 0}});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
  }
}

TEST(Standardize, HeldOutUsesTrainingParameters) {
  PixelTable train = grid_table(3, 1, [](int, int) { return 1; });
  train.continuous["c"] = {1, 2, 3};
  const auto s = standardize_covariates(train, {{"c", CovariateRole::Linear, 0}});
  PixelTable held = grid_table(2, 1, [](int, int) { return 1; });
  held.continuous["c"] = {10, 20};
  const PixelTable out = apply_standardization(held, s.params);
  EXPECT_DOUBLE_EQ(out.covariate("c")[0], 8.0);
  EXPECT_DOUBLE_EQ(out.covariate("c")[1], 18.0);
}

TEST(Standardize, MomentsAndInverseOnRandomColumns) {
  std::mt19937_64 rng(11);
  std::lognormal_distribution<double> ld(1.0, 2.0);
  for (int rep = 0; rep < 20; ++rep) {
    PixelTable t = grid_table(50, 4, [](int, int) { return 1; });
    auto& c = t.continuous["c"];
    for (std::size_t i = 0; i < t.size(); ++i) c.push_back(ld(rng));
    const auto s = standardize_covariates(t, {{"c", CovariateRole::Linear, 0}});
    const auto& z = s.table.covariate("c");
    const double n = static_cast<double>(z.size());
    const double mean = std::accumulate(z.begin(), z.end(), 0.0) / n;
    double ss = 0;
    for (double v : z) ss += (v - mean) * (v - mean);
    EXPECT_LT(std::abs(mean), 1e-10);
    EXPECT_LT(std::abs(std::sqrt(ss / (n - 1)) - 1.0), 1e-10);
    const PixelTable back = destandardize(s.table, s.params);
    for (std::size_t i = 0; i < c.size(); ++i)
      EXPECT_LE(std::abs(back.covariate("c")[i] - c[i]), 1e-10 * std::abs(c[i]));
  }
}

TEST(BinEquidistant, BoundaryGoesToUpperBin) {
  const std::vector<double> v{0.0, 0.5, 1.0};
  const Binning b = bin_equidistant(v, 2);
  EXPECT_EQ(b.classes, (std::vector<int>{1, 2, 2}));
  EXPECT_EQ(b.edges, (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(BinEquidistant, UniformDrawsOccupyAllTwentyClasses) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(10000);
  for (double& x : v) x = u(rng);
  const Binning b = bin_equidistant(v, 20);
  std::vector<int> hits(21, 0);
  for (int c : b.classes) {
    ASSERT_GE(c, 1);
    ASSERT_LE(c, 20);
    ++hits[c];
  }
  for (int c = 1; c <= 20; ++c) EXPECT_GT(hits[c], 0) << "class " << c;
}

TEST(BinEquidistant, ConstantColumnAndTooFewBins) {
  const std::vector<double> v{3, 3, 3};
  EXPECT_THROW(bin_equidistant(v, 5), DataError);
  const std::vector<double> w{1, 2};
  EXPECT_THROW(bin_equidistant(w, 1), DataError);
}

TEST(BinEquidistant, HeldOutValuesClampToRange) {
  const std::vector<double> edges{0, 1, 2, 3};
  const std::vector<double> v{-5, 0, 2.999, 3, 10};
  EXPECT_EQ(apply_bins(v, edges), (std::vector<int>{1, 1, 3, 3, 3}));
}

TEST(BuildAdjacency, TwoByOneSideBySide) {
  PixelTable t = grid_table(2, 1, [](int x, int) { return x == 0 ? 10 : 20; });
  const auto g = build_adjacency(t, make_partition(t, "u"), {});
  ASSERT_EQ(g.n_units(), 2u);
  EXPECT_EQ(g.edges(), (std::vector<std::pair<int, int>>{{0, 1}}));
  EXPECT_EQ(g.degree(0), 1);
  EXPECT_EQ(g.degree(1), 1);
}

TEST(BuildAdjacency, SingleUnitHasNoEdges) {
  PixelTable t = grid_table(2, 2, [](int, int) { return 7; });
  const auto g = build_adjacency(t, make_partition(t, "u"), {});
  EXPECT_EQ(g.n_units(), 1u);
  EXPECT_TRUE(g.edges().empty());
}

TEST(BuildAdjacency, VerticalStripsFormPath) {
  PixelTable t = grid_table(3, 3, [](int x, int) { return x + 1; });
  const auto g = build_adjacency(t, make_partition(t, "u"), {});
  EXPECT_EQ(g.edges(), (std::vector<std::pair<int, int>>{{0, 1}, {1, 2}}));
  EXPECT_EQ(g.degree(1), 2);
  EXPECT_TRUE(g.connected());
}

TEST(BuildAdjacency, DiagonalContactIsNotAdjacency) {
  // Checkerboard 2x2: units touch only at corners along diagonals.
  PixelTable t = grid_table(2, 2, [](int x, int y) { return (x + y) % 2 == 0 ? 1 + x : 3 + x; });
  const auto g = build_adjacency(t, make_partition(t, "u"), {});
  for (auto [a, b] : g.edges()) {
    const auto ua = g.unit_ids[a], ub = g.unit_ids[b];
    EXPECT_FALSE((ua == 1 && ub == 2) || (ua == 3 && ub == 4));
  }
}

TEST(BuildAdjacency, DisconnectedGraphIsFlagged) {
  PixelTable t = grid_table(4, 1, [](int x, int) { return x + 1; });
  // Drop the middle pixels' link by moving the right half away.
  t.x[2] = 10;
  t.x[3] = 11;
  const auto g = build_adjacency(t, make_partition(t, "u"), {});
  EXPECT_EQ(g.n_components, 2);
  EXPECT_FALSE(g.connected());
}

TEST(BuildAdjacency, InvariantUnderRowPermutation) {
  std::mt19937_64 rng(5);
  PixelTable t = grid_table(12, 9, [](int x, int y) { return (x / 3) + 10 * (y / 4); });
  const auto g0 = build_adjacency(t, make_partition(t, "u"), {});
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<std::size_t> perm(t.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const PixelTable p = t.subset(perm);
    const auto g = build_adjacency(p, make_partition(p, "u"), {});
    EXPECT_EQ(g.unit_ids, g0.unit_ids);
    EXPECT_EQ(g.neighbors, g0.neighbors);
  }
}

TEST(Partition, UnitSizesSumToPixels) {
  PixelTable t = grid_table(7, 5, [](int x, int y) { return (x * 3 + y) % 4; });
  const auto p = make_partition(t, "u");
  const auto sizes = p.unit_sizes();
  EXPECT_EQ(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}), t.size());
  for (auto s : sizes) EXPECT_GE(s, 1u);
}

TEST(EdgeList, ExportImportRoundTrip) {
  PixelTable t = grid_table(3, 3, [](int x, int) { return 5 * (x + 1); });
  const auto g = build_adjacency(t, make_partition(t, "u"), {});
  const auto path = std::filesystem::temp_directory_path() / "lgcp_edges.csv";
  csv::write_atomic(path, format_edge_list(g));
  const auto back = read_edge_list(path, g.unit_ids);
  EXPECT_EQ(back.neighbors, g.neighbors);
  std::filesystem::remove(path);
}
