#include "lgcp/predict.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lgcp/error.hpp"

namespace lgcp {

const char* to_string(IntensityEstimator e) {
  return e == IntensityEstimator::PluginMean ? "plugin-mean" : "lognormal-mean";
}

IntensityEstimator parse_estimator(const std::string& s) {
  if (s == "plugin-mean" || s == "plugin") return IntensityEstimator::PluginMean;
  if (s == "lognormal-mean" || s == "lognormal") return IntensityEstimator::LognormalMean;
  throw ConfigError("unknown intensity estimator '" + s + "'");
}

IntensitySurface pixel_intensity(std::span<const double> eta_mean, std::span<const double> eta_sd,
                                 IntensityEstimator estimator) {
  if (eta_mean.size() != eta_sd.size()) throw DataError("eta mean and sd differ in length");
  IntensitySurface s;
  s.estimator = estimator;
  s.lambda.resize(eta_mean.size());
  for (std::size_t i = 0; i < eta_mean.size(); ++i) {
    double log_lambda = eta_mean[i];
    if (estimator == IntensityEstimator::LognormalMean) log_lambda += 0.5 * eta_sd[i] * eta_sd[i];
    s.lambda[i] = std::exp(log_lambda);
    if (!std::isfinite(s.lambda[i]) || !(s.lambda[i] > 0))
      throw NumericalError("pixel intensity is not a positive finite number at row " + std::to_string(i + 1));
  }
  return s;
}

IntensitySurface pixel_intensity(const PosteriorResult& result, IntensityEstimator estimator) {
  return pixel_intensity(std::span<const double>(result.eta_mean.data(), result.eta_mean.size()),
                         std::span<const double>(result.eta_sd.data(), result.eta_sd.size()), estimator);
}

double susceptibility(double lambda_a) {
  if (!(lambda_a >= 0)) throw DataError("susceptibility needs a non-negative intensity");
  return -std::expm1(-lambda_a);
}

UnitIntensity aggregate_intensity(const IntensitySurface& surface, const MappingPartition& partition,
                                  std::span<const std::int64_t> counts) {
  const std::size_t n = surface.lambda.size();
  if (partition.unit_of_row.size() != n || counts.size() != n)
    throw DataError("partition '" + partition.name + "' does not cover every pixel");
  UnitIntensity u;
  u.partition = partition.name;
  u.unit_ids = partition.unit_ids;
  u.lambda.assign(partition.n_units(), 0.0);
  u.observed.assign(partition.n_units(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = partition.unit_of_row[i];
    if (k < 0) throw DataError("pixel row " + std::to_string(i + 1) + " has no unit assignment");
    u.lambda[k] += surface.lambda[i];
    u.observed[k] += counts[i];
  }
  u.susceptibility.reserve(u.lambda.size());
  for (double l : u.lambda) u.susceptibility.push_back(susceptibility(l));
  return u;
}

UnitIntensity aggregate_nested(const UnitIntensity& fine, const MappingPartition& fine_partition,
                               const MappingPartition& coarse_partition) {
  if (fine_partition.unit_of_row.size() != coarse_partition.unit_of_row.size())
    throw DataError("partitions cover different pixel sets");
  std::vector<int> parent(fine_partition.n_units(), -1);
  for (std::size_t i = 0; i < fine_partition.unit_of_row.size(); ++i) {
    int& p = parent[fine_partition.unit_of_row[i]];
    const int c = coarse_partition.unit_of_row[i];
    if (p >= 0 && p != c)
      throw DataError("partition '" + fine_partition.name + "' is not nested in '" +
                      coarse_partition.name + "'");
    p = c;
  }
  UnitIntensity u;
  u.partition = coarse_partition.name;
  u.unit_ids = coarse_partition.unit_ids;
  u.lambda.assign(coarse_partition.n_units(), 0.0);
  u.observed.assign(coarse_partition.n_units(), 0);
  for (std::size_t k = 0; k < parent.size(); ++k) {
    u.lambda[parent[k]] += fine.lambda[k];
    u.observed[parent[k]] += fine.observed[k];
  }
  for (double l : u.lambda) u.susceptibility.push_back(susceptibility(l));
  return u;
}

AspectCurve aspect_effect_curve(double beta_east, double beta_north, const Eigen::Matrix2d& cov) {
  if (!cov.allFinite()) throw NumericalError("aspect covariance is not finite");
  constexpr double z = 1.959963984540054;
  AspectCurve c;
  for (int deg = 0; deg < 360; ++deg) {
    const double a = deg * std::numbers::pi / 180.0;
    const double s = std::sin(a), co = std::cos(a);
    const double f = beta_east * s + beta_north * co;
    const double var = s * s * cov(0, 0) + co * co * cov(1, 1) + 2.0 * s * co * cov(0, 1);
    const double sd = std::sqrt(std::max(var, 0.0));
    c.degrees.push_back(deg);
    c.effect.push_back(f);
    c.sd.push_back(sd);
    c.lower.push_back(f - z * sd);
    c.upper.push_back(f + z * sd);
  }
  c.amplitude = std::hypot(beta_east, beta_north);
  double phase = std::atan2(beta_east, beta_north) * 180.0 / std::numbers::pi;
  if (phase < 0) phase += 360.0;
  c.peak_degrees = phase;
  return c;
}

AspectCurve aspect_effect_curve(const PosteriorResult& result, const std::string& eastness,
                                const std::string& northness) {
  const auto& names = result.fixed.names;
  auto find = [&](const std::string& n) {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) throw ConfigError("aspect curve needs fixed effect '" + n + "'");
    return static_cast<int>(it - names.begin());
  };
  const int e = find(eastness), nn = find(northness);
  if (result.fixed.covariance.rows() != static_cast<int>(names.size()))
    throw NumericalError("posterior lacks the fixed-effect covariance");
  Eigen::Matrix2d cov;
  cov << result.fixed.covariance(e, e), result.fixed.covariance(e, nn), result.fixed.covariance(nn, e),
      result.fixed.covariance(nn, nn);
  return aspect_effect_curve(result.mean[result.fixed.index[e]], result.mean[result.fixed.index[nn]], cov);
}

}  // namespace lgcp
