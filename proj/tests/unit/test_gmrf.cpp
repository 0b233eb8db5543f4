#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "lgcp/error.hpp"
#include "lgcp/gmrf.hpp"
#include "lgcp/log.hpp"
#include "support/graphs.hpp"

using namespace lgcp;
using lgcp::testing::eigen_pseudo_inverse;
using lgcp::testing::path_graph;
using lgcp::testing::random_graph;

namespace {

Eigen::MatrixXd dense(const StructureMatrix& s) { return Eigen::MatrixXd(s.r); }

double geometric_mean(const Eigen::VectorXd& v) { return std::exp(v.array().log().mean()); }

}  // namespace

TEST(Besag, PathGraphStructure) {
  const auto s = besag_structure(path_graph(3));
  Eigen::MatrixXd expected(3, 3);
  expected << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  EXPECT_TRUE(dense(s).isApprox(expected));
  EXPECT_EQ(s.rank_deficiency, 1);
  ASSERT_EQ(s.constraints.size(), 1u);
  EXPECT_TRUE(s.constraints[0].coefficients.isApprox(Eigen::VectorXd::Ones(3)));
}

TEST(Besag, ConditionalOfNodeWithTwoNeighbours) {
  const auto s = besag_structure(path_graph(3));
  Eigen::VectorXd x(3);
  x << 1.0, 123.0, 3.0;
  const auto c = full_conditional(s, 1, x, 1.0);
  EXPECT_DOUBLE_EQ(c.mean, 2.0);
  EXPECT_DOUBLE_EQ(c.variance, 0.5);
}

TEST(Besag, TwoDisconnectedPairs) {
  const auto g = AdjacencyGraph::from_edges({1, 2, 3, 4}, {{0, 1}, {2, 3}});
  const auto s = besag_structure(g);
  EXPECT_EQ(s.rank_deficiency, 2);
  EXPECT_EQ(s.constraints.size(), 2u);
}

TEST(Besag, IsolatedUnitBecomesIndependentWithWarning) {
  std::vector<std::string> warnings;
  auto prev = log::set_sink([&](log::Level l, std::string_view m) {
    if (l == log::Level::Warning) warnings.emplace_back(m);
  });
  const auto g = AdjacencyGraph::from_edges({1, 2, 3}, {{0, 1}});
  const auto s = besag_structure(g);
  log::set_sink(prev);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_TRUE(s.isolated[2]);
  EXPECT_DOUBLE_EQ(s.r.coeff(2, 2), 1.0);
  EXPECT_EQ(s.rank_deficiency, 1);
  EXPECT_EQ(s.constraints[0].coefficients[2], 0.0);
}

TEST(Besag, RowSumsZeroAndPsdOnRandomGraphs) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 30; ++rep) {
    const auto s = besag_structure(random_graph(5 + rep, 0.15, rng, rep % 3 != 0));
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(s.n());
    const Eigen::VectorXd rs = s.r * ones;
    for (int j = 0; j < s.n(); ++j)
      if (!s.isolated[j]) EXPECT_EQ(rs[j], 0.0);
    for (int k = 0; k < 10; ++k) {
      Eigen::VectorXd x(s.n());
      for (int j = 0; j < s.n(); ++j) x[j] = nd(rng);
      EXPECT_GE(s.quadratic_form(x), -1e-12);
    }
  }
}

TEST(Besag, ConditionalMatchesClosedFormOnRandomConfigurations) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 20; ++rep) {
    const auto g = random_graph(12, 0.2, rng);
    const auto s = besag_structure(g);
    Eigen::VectorXd x(s.n());
    for (int j = 0; j < s.n(); ++j) x[j] = nd(rng);
    const double tau = std::exp(nd(rng));
    for (int j = 0; j < s.n(); ++j) {
      double sum = 0;
      for (int k : g.neighbors[j]) sum += x[k];
      const double d = g.degree(j);
      const auto c = full_conditional(s, j, x, tau);
      EXPECT_NEAR(c.mean, sum / d, 1e-12);
      EXPECT_NEAR(c.variance, 1.0 / (d * tau), 1e-12);
    }
  }
}

TEST(Rw1, ThreeAndTwoClasses) {
  Eigen::MatrixXd e3(3, 3);
  e3 << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  EXPECT_TRUE(dense(rw1_structure(3)).isApprox(e3));
  Eigen::MatrixXd e2(2, 2);
  e2 << 1, -1, -1, 1;
  const auto s2 = rw1_structure(2);
  EXPECT_TRUE(dense(s2).isApprox(e2));
  EXPECT_EQ(s2.rank_deficiency, 1);
  EXPECT_THROW(rw1_structure(1), DataError);
}

TEST(Rw1, QuadraticFormIsSumOfSquaredIncrements) {
  Eigen::VectorXd v(3);
  v << 0, 1, 2;
  EXPECT_DOUBLE_EQ(rw1_structure(3).quadratic_form(v), 2.0);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  const auto s = rw1_structure(20);
  Eigen::VectorXd x(20);
  for (int i = 0; i < 20; ++i) x[i] = nd(rng);
  double inc = 0;
  for (int i = 1; i < 20; ++i) inc += (x[i] - x[i - 1]) * (x[i] - x[i - 1]);
  EXPECT_NEAR(s.quadratic_form(x), inc, 1e-12);
}

TEST(Iid, IdentityWithoutConstraints) {
  const auto s = iid_structure(4);
  EXPECT_TRUE(dense(s).isApprox(Eigen::MatrixXd::Identity(4, 4)));
  EXPECT_EQ(s.rank_deficiency, 0);
  EXPECT_TRUE(s.constraints.empty());
  Eigen::VectorXd v(4);
  v << 1, -2, 3, 0.5;
  EXPECT_DOUBLE_EQ(s.quadratic_form(v), v.squaredNorm());
  const double tau = 2.5;
  const auto var = constrained_marginal_variances(s);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(var[i] / tau, 1.0 / tau);
}

TEST(Scale, IidIsNoOp) {
  const auto s = scale_structure(iid_structure(5));
  for (double f : s.scaling_factor) EXPECT_EQ(f, 1.0);
  EXPECT_TRUE(dense(s).isApprox(Eigen::MatrixXd::Identity(5, 5)));
}

TEST(Scale, ThreeNodePathMatchesEigenOracle) {
  const auto raw = besag_structure(path_graph(3));
  const auto s = scale_structure(raw);
  const Eigen::MatrixXd pinv = eigen_pseudo_inverse(dense(raw));
  EXPECT_NEAR(s.scaling_factor[0], geometric_mean(pinv.diagonal()), 1e-8);
  // Hand value: diag of R+ for the 3-path is (5/9, 2/9, 5/9).
  EXPECT_NEAR(s.scaling_factor[0], std::cbrt(50.0 / 729.0), 1e-12);
}

TEST(Scale, IdempotentAndInvariantToMultiples) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const auto raw = besag_structure(random_graph(15 + rep, 0.1, rng, rep % 2 == 0));
    const auto once = scale_structure(raw);
    const auto twice = scale_structure(once);
    for (double f : twice.scaling_factor) EXPECT_NEAR(f, 1.0, 1e-8);
    if (raw.n_components() == 1) {
      StructureMatrix mult = raw;
      mult.r *= 3.7;
      const auto from_mult = scale_structure(mult);
      EXPECT_TRUE(dense(from_mult).isApprox(dense(once), 1e-8));
    }
    // Per component geometric mean 1.
    const Eigen::VectorXd v = constrained_marginal_variances(once);
    for (int c = 0; c < once.n_components(); ++c) {
      double lg = 0;
      int cnt = 0;
      for (int j = 0; j < once.n(); ++j)
        if (once.component[j] == c && !once.isolated[j]) {
          lg += std::log(v[j]);
          ++cnt;
        }
      if (cnt > 0) EXPECT_NEAR(std::exp(lg / cnt), 1.0, 1e-8);
    }
  }
}

TEST(Scale, SparseRouteAboveDenseLimitMatchesOracle) {
  const int n = 2100;
  const auto raw = rw1_structure(n);
  const Eigen::VectorXd v = constrained_marginal_variances(raw);
  // Closed form for the path Laplacian pseudo-inverse diagonal:
  // (R+)_ii = sum_k>=1 v_k(i)^2 / lambda_k with cosine eigenvectors.
  const double pi = std::acos(-1.0);
  for (int i : {0, 1, 500, 1049, n - 1}) {
    double acc = 0;
    for (int k = 1; k < n; ++k) {
      const double lam = 2.0 - 2.0 * std::cos(pi * k / n);
      const double vk = std::sqrt(2.0 / n) * std::cos(pi * k * (i + 0.5) / n);
      acc += vk * vk / lam;
    }
    EXPECT_NEAR(v[i], acc, 1e-8 * acc) << i;
  }
  const auto s = scale_structure(raw);
  EXPECT_NEAR(geometric_mean(constrained_marginal_variances(s)), 1.0, 1e-8);
}

TEST(Sample, SatisfiesConstraintsAndIsDeterministic) {
  std::mt19937_64 rng(1);
  const auto g = AdjacencyGraph::from_edges({1, 2, 3, 4, 5, 6}, {{0, 1}, {1, 2}, {3, 4}});
  const auto s = scale_structure(besag_structure(g));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Eigen::VectorXd x = sample_constrained(s, 2.0, seed);
    for (const auto& c : s.constraints) EXPECT_LT(std::abs(c.coefficients.dot(x)), 1e-10);
    const Eigen::VectorXd y = sample_constrained(s, 2.0, seed);
    EXPECT_EQ(x, y);
  }
  EXPECT_THROW(sample_constrained(s, 0.0, 1), DataError);
}

TEST(Sample, EmpiricalVarianceMatchesPseudoInverse) {
  const auto s = scale_structure(besag_structure(path_graph(3)));
  const Eigen::MatrixXd pinv = eigen_pseudo_inverse(dense(s));
  const int reps = 10000;
  Eigen::VectorXd sum2 = Eigen::VectorXd::Zero(3);
  for (int r = 0; r < reps; ++r) {
    const Eigen::VectorXd x = sample_constrained(s, 1.0, 1000 + r);
    sum2 += x.cwiseProduct(x);
  }
  const Eigen::VectorXd var = sum2 / reps;
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(var[j] / pinv(j, j), 1.0, 0.05) << j;
}

TEST(Sample, FullCovarianceOnLargerGraph) {
  std::mt19937_64 rng(21);
  const auto s = scale_structure(besag_structure(random_graph(8, 0.3, rng)));
  const Eigen::MatrixXd pinv = eigen_pseudo_inverse(dense(s));
  const int reps = 20000;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(8, 8);
  for (int r = 0; r < reps; ++r) {
    const Eigen::VectorXd x = sample_constrained(s, 4.0, r);
    acc += x * x.transpose();
  }
  acc /= reps;
  EXPECT_LT((acc - pinv / 4.0).cwiseAbs().maxCoeff(), 0.05 * pinv.diagonal().maxCoeff() / 4.0 * 2);
}

TEST(LogPdet, MatchesEigenOracle) {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 5; ++rep) {
    const auto s = scale_structure(besag_structure(random_graph(20, 0.1, rng, rep != 2)));
    EXPECT_NEAR(log_pseudo_determinant(s), lgcp::testing::eigen_log_pdet(dense(s)), 1e-8);
  }
}

TEST(Coo, ExportsEveryEntry) {
  const std::string out = format_coo(rw1_structure(3).r);
  EXPECT_EQ(out.substr(0, 14), "row,col,value\n");
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 1 + 7);
}
