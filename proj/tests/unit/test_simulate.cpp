#include <gtest/gtest.h>

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <map>
#include <queue>
#include <set>

#include "lgcp/error.hpp"
#include "lgcp/simulate.hpp"

using namespace lgcp;

namespace {

SimulationConfig small(std::uint64_t seed) {
  SimulationConfig c;
  c.width = 12;
  c.height = 10;
  c.n_units = 20;
  c.n_catchments = 5;
  c.n_admin = 2;
  c.seed = seed;
  return c;
}

Eigen::VectorXd vec1(double v) {
  Eigen::VectorXd out(1);
  out << v;
  return out;
}

}  // namespace

TEST(DeriveSeed, DistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t m = 0; m < 20; ++m)
    for (std::uint64_t i = 0; i < 20; ++i) EXPECT_TRUE(seen.insert(derive_seed(m, i)).second);
  EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}

TEST(Simulate, ConstantEtaTotalNearExpectation) {
  SimulationConfig c = small(1);
  c.width = 10;
  c.height = 10;
  c.constant_eta = true;
  c.beta0 = std::log(0.5);
  const auto d = simulate_lgcp(c);
  EXPECT_EQ(d.table.size(), 100u);
  EXPECT_NEAR(static_cast<double>(d.table.total_count()), 50.0, 4.0 * std::sqrt(50.0));
  for (double l : d.lambda) EXPECT_NEAR(l, 0.5, 1e-15);
}

TEST(Simulate, ZeroSigmaMeansNoLatentEffect) {
  SimulationConfig c = small(2);
  c.sigma0 = 0.0;
  const auto d = simulate_lgcp(c);
  EXPECT_EQ(d.lse.cwiseAbs().maxCoeff(), 0.0);
  for (std::size_t i = 0; i < d.table.size(); ++i) {
    const double fixed = c.beta0 + c.beta[0] * d.table.covariate("cov_1")[i] +
                         c.beta[1] * d.table.covariate("cov_2")[i];
    EXPECT_NEAR(d.eta[i], fixed, 1e-12);
  }
}

TEST(Simulate, DeterministicUnderSeed) {
  const auto a = simulate_lgcp(small(3));
  const auto b = simulate_lgcp(small(3));
  EXPECT_EQ(a.table.count, b.table.count);
  EXPECT_EQ(a.eta, b.eta);
  EXPECT_EQ(format_truth(a), format_truth(b));
  EXPECT_NE(simulate_lgcp(small(4)).table.count, a.table.count);
}

TEST(Simulate, LatentEffectSatisfiesConstraint) {
  const auto d = simulate_lgcp(small(5));
  EXPECT_LT(std::abs(d.lse.sum()), 1e-10);
}

TEST(Simulate, PartitionsAreNestedAndContiguous) {
  const auto d = simulate_lgcp(small(6));
  const auto& t = d.table;
  std::map<std::int64_t, std::int64_t> su_to_ca, ca_to_ad;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto su = t.membership("slope_unit")[i], ca = t.membership("catchment")[i],
               ad = t.membership("admin")[i];
    EXPECT_TRUE(su_to_ca.emplace(su, ca).first->second == ca);
    EXPECT_TRUE(ca_to_ad.emplace(ca, ad).first->second == ad);
  }
  EXPECT_EQ(su_to_ca.size(), 20u);
  EXPECT_EQ(ca_to_ad.size(), 5u);
  // Each slope unit is 4-connected.
  const int w = 12;
  for (const auto& [unit, _] : su_to_ca) {
    std::vector<int> members;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t.membership("slope_unit")[i] == unit) members.push_back(static_cast<int>(i));
    std::set<int> in(members.begin(), members.end()), seen{members[0]};
    std::queue<int> q;
    q.push(members[0]);
    while (!q.empty()) {
      const int p = q.front();
      q.pop();
      for (int nb : {p - 1, p + 1, p - w, p + w}) {
        if (nb < 0 || nb >= static_cast<int>(t.size())) continue;
        if ((nb == p - 1 || nb == p + 1) && nb / w != p / w) continue;
        if (in.count(nb) && seen.insert(nb).second) q.push(nb);
      }
    }
    EXPECT_EQ(seen.size(), members.size()) << unit;
  }
}

TEST(Simulate, CountsAreEquidispersed) {
  SimulationConfig c = small(0);
  c.constant_eta = true;
  c.beta0 = std::log(2.0);
  const int reps = 3000;
  std::vector<double> sum(3, 0), sum2(3, 0);
  for (int r = 0; r < reps; ++r) {
    c.seed = 1000 + r;
    const auto d = simulate_lgcp(c);
    for (int p = 0; p < 3; ++p) {
      const double y = static_cast<double>(d.table.count[p * 17]);
      sum[p] += y;
      sum2[p] += y * y;
    }
  }
  const double lambda = 2.0;
  for (int p = 0; p < 3; ++p) {
    const double mean = sum[p] / reps;
    const double var = (sum2[p] - reps * mean * mean) / (reps - 1);
    EXPECT_NEAR(mean, lambda, 3.0 * std::sqrt(lambda / reps));
    EXPECT_NEAR(var, lambda, 3.0 * std::sqrt((lambda + 2 * lambda * lambda) / reps));
  }
}

TEST(Simulate, InvalidConfigs) {
  SimulationConfig c = small(1);
  c.n_units = 1000;
  EXPECT_THROW(simulate_lgcp(c), ConfigError);
  c = small(1);
  c.width = 0;
  EXPECT_THROW(simulate_lgcp(c), ConfigError);
  c = small(1);
  c.n_catchments = 30;
  EXPECT_THROW(simulate_lgcp(c), ConfigError);
}

TEST(Oracle, SinglePixelFlatInterceptIsDigamma) {
  // With a flat prior on beta, exp(beta) | y ~ Gamma(y, 1), so E[beta] = digamma(y).
  PixelTable t;
  t.pixel_id = {1};
  t.x = {0};
  t.y = {0};
  t.count = {2};
  ModelSpec m;
  const auto layout = assemble_layout(m, t);
  const auto data = make_fit_data(layout, t);
  const auto gk = tiny_posterior_oracle(layout, data, Eigen::VectorXd(0), QuadratureRule::GaussKronrod);
  const auto ts = tiny_posterior_oracle(layout, data, Eigen::VectorXd(0), QuadratureRule::TanhSinh);
  EXPECT_NEAR(gk.mean[0], ts.mean[0], 1e-6);
  EXPECT_NEAR(gk.log_marginal, ts.log_marginal, 1e-6);
  EXPECT_NEAR(gk.mean[0], boost::math::digamma(2.0), 1e-4);
}

TEST(Oracle, SwappedDataSwapsMeans) {
  PixelTable t;
  t.pixel_id = {1, 2};
  t.x = {0, 1};
  t.y = {0, 0};
  t.count = {3, 9};
  t.categorical["g"] = {"a", "b"};
  ModelSpec m;
  m.intercept = false;
  m.iid = {"g"};
  const auto layout = assemble_layout(m, t);
  const auto r1 = tiny_posterior_oracle(layout, make_fit_data(layout, t), vec1(0.5));
  t.count = {9, 3};
  const auto r2 = tiny_posterior_oracle(layout, make_fit_data(layout, t), vec1(0.5));
  EXPECT_NEAR(r1.mean[0], r2.mean[1], 1e-9);
  EXPECT_NEAR(r1.mean[1], r2.mean[0], 1e-9);
  EXPECT_NEAR(r1.log_marginal, r2.log_marginal, 1e-9);
}

TEST(Oracle, LaplaceModeDiffersFromMeanForSkewedPosterior) {
  PixelTable t;
  t.pixel_id = {1};
  t.x = {0};
  t.y = {0};
  t.count = {1};
  t.categorical["g"] = {"a"};
  ModelSpec m;
  m.intercept = false;
  m.iid = {"g"};
  const auto layout = assemble_layout(m, t);
  const auto data = make_fit_data(layout, t);
  const auto oracle = tiny_posterior_oracle(layout, data, vec1(0.0));
  const auto ga = gaussian_approximation(layout, data, vec1(0.0));
  const double gap = oracle.mean[0] - ga.mode[0];
  RecordProperty("mean_minus_mode", std::to_string(gap));
  EXPECT_NE(gap, 0.0);
  EXPECT_LT(std::abs(gap), 0.2);
}

TEST(Oracle, RejectsLargeOrConstrainedModels) {
  PixelTable t;
  for (int i = 0; i < 4; ++i) {
    t.pixel_id.push_back(i + 1);
    t.x.push_back(i);
    t.y.push_back(0);
    t.count.push_back(i);
    t.categorical["g"].push_back(std::string(1, char('a' + i)));
    t.partitions["u"].push_back(i);
  }
  ModelSpec m;
  m.iid = {"g"};
  const auto big = assemble_layout(m, t);
  EXPECT_THROW(tiny_posterior_oracle(big, make_fit_data(big, t), vec1(0.0)), ConfigError);
  ModelSpec b;
  b.intercept = false;
  b.besag = "u";
  PixelTable t3 = t.subset(std::vector<std::size_t>{0, 1, 2});
  const auto con = assemble_layout(b, t3);
  EXPECT_THROW(tiny_posterior_oracle(con, make_fit_data(con, t3), vec1(0.0)), ConfigError);
}

TEST(Recovery, NoTriggerNoStructureMostlyNotSignificant) {
  SimulationConfig c = small(21);
  c.width = 20;
  c.height = 20;
  c.n_units = 40;
  c.sigma0 = 0.0;
  c.trigger_amplitude = 0.0;
  c.beta0 = -1.0;
  const auto rep = recovery_experiment(c);
  EXPECT_GE(rep.fraction_not_significant, 0.9);
  EXPECT_LE(rep.fitted_total_ratio_error, 0.10);
}

TEST(BruteForceAuc, HandExample) {
  const std::vector<double> s{0.8, 0.6, 0.4, 0.2, 0.6};
  const std::vector<int> l{1, 0, 1, 0, 1};
  // Pairs (pos, neg): (0.8,0.6)=1 (0.8,0.2)=1 (0.4,0.6)=0 (0.4,0.2)=1 (0.6,0.6)=.5 (0.6,0.2)=1
  EXPECT_DOUBLE_EQ(brute_force_auc(s, l), 4.5 / 6.0);
  EXPECT_THROW(brute_force_auc(s, std::vector<int>(5, 0)), DataError);
}
