#pragma once

#include <span>
#include <string>
#include <vector>

#include "lgcp/inference.hpp"
#include "lgcp/ingest.hpp"

namespace lgcp {

enum class IntensityEstimator { PluginMean, LognormalMean };

const char* to_string(IntensityEstimator e);
IntensityEstimator parse_estimator(const std::string& s);

struct IntensitySurface {
  std::vector<double> lambda;
  IntensityEstimator estimator = IntensityEstimator::LognormalMean;
};

// plugin-mean: exp(E eta); lognormal-mean: exp(E eta + Var eta / 2).
IntensitySurface pixel_intensity(std::span<const double> eta_mean, std::span<const double> eta_sd,
                                 IntensityEstimator estimator);
IntensitySurface pixel_intensity(const PosteriorResult& result, IntensityEstimator estimator);

struct UnitIntensity {
  std::string partition;
  std::vector<std::int64_t> unit_ids;
  std::vector<double> lambda;
  std::vector<std::int64_t> observed;
  std::vector<double> susceptibility;
};

UnitIntensity aggregate_intensity(const IntensitySurface& surface, const MappingPartition& partition,
                                  std::span<const std::int64_t> counts);

// Sums units of a finer partition into a coarser one. Throws if some fine
// unit straddles two coarse units.
UnitIntensity aggregate_nested(const UnitIntensity& fine, const MappingPartition& fine_partition,
                               const MappingPartition& coarse_partition);

// Probability of at least one event: 1 - exp(-lambda_A).
double susceptibility(double lambda_a);

struct AspectCurve {
  std::vector<double> degrees;
  std::vector<double> effect;
  std::vector<double> sd;
  std::vector<double> lower;  // 95% band
  std::vector<double> upper;
  double amplitude = 0.0;
  double peak_degrees = 0.0;  // direction of the maximum, clockwise from north
};

// f(a) = bE sin(a) + bN cos(a) at 1 degree steps, with the Gaussian band from
// the joint covariance of (bE, bN).
AspectCurve aspect_effect_curve(double beta_east, double beta_north, const Eigen::Matrix2d& covariance);
AspectCurve aspect_effect_curve(const PosteriorResult& result, const std::string& eastness,
                                const std::string& northness);

}  // namespace lgcp
