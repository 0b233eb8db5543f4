#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgcp/inference.hpp"
#include "lgcp/ingest.hpp"

namespace lgcp {

// Deterministic child seed for stream `index` of a master seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct SimulationConfig {
  int width = 50;
  int height = 50;
  int n_units = 150;      // slope units, grown by seeded region merging
  int n_catchments = 20;  // unions of slope units
  int n_admin = 4;        // unions of catchments
  double beta0 = -1.5;
  std::vector<double> beta{0.4, -0.3};  // one standard-normal covariate each
  double sigma0 = 0.3;                  // sd of the scaled Besag LSE
  // Smooth radial decay from a random epicentre, emulating a shaking field.
  double trigger_amplitude = 0.0;
  double trigger_scale = 20.0;  // decay length in pixels
  int ridge_bumps = 0;          // narrow bumps added to the trigger
  double ridge_amplitude = 0.5;
  bool constant_eta = false;  // eta = beta0 everywhere (checks only)
  std::uint64_t seed = 1;

  void validate() const;
};

struct SimulatedDataset {
  PixelTable table;  // partitions slope_unit, catchment, admin; covariates cov_1.., trigger
  MappingPartition slope_units;
  Eigen::VectorXd lse;  // per slope unit (sorted unit ids)
  std::vector<double> trigger;
  std::vector<double> eta;
  std::vector<double> lambda;
};

SimulatedDataset simulate_lgcp(const SimulationConfig& config);
std::string format_truth(const SimulatedDataset& data);

// Grows n_regions contiguous regions on a graph by seeded random frontier
// expansion. Returns a region label per node.
std::vector<int> grow_regions(const std::vector<std::vector<int>>& neighbors, int n_regions,
                              std::uint64_t seed);

struct RecoveryReport {
  double correlation = 0.0;  // unit-level posterior-mean LSE vs mean withheld trigger
  double coverage = 0.0;     // 95% interval coverage of the true LSE (trigger+LSE model,
                             // LSE-only when the trigger is flat and its models are skipped)
  double auc_trigger_only = 0.0;
  double auc_lse_only = 0.0;
  double auc_trigger_lse = 0.0;
  double fitted_total_ratio_error = 0.0;  // max over the three fits
  double fraction_not_significant = 0.0;  // LSE-only model
};

struct RecoveryOptions {
  FitOptions fit;
  int trigger_bins = 20;
};

// Fits trigger-only, LSE-only and trigger+LSE models to one simulated
// dataset. All share the intercept and the cov_* covariates.
RecoveryReport recovery_experiment(const SimulationConfig& config, const RecoveryOptions& options = {});

enum class QuadratureRule { GaussKronrod, TanhSinh };

struct OracleResult {
  double log_marginal = 0.0;  // log pi(y | theta), or log pi(y) when theta is integrated
  Eigen::VectorXd mean;       // posterior mean of the latent vector
};

// Exact posterior summaries by nested adaptive quadrature for models with at
// most 3 latent dimensions and no linear constraints. With theta given the
// result conditions on it; otherwise theta (1-D only) is integrated under the
// layout's PC prior.
OracleResult tiny_posterior_oracle(const LatentLayout& layout, const FitData& data,
                                   std::optional<Eigen::VectorXd> theta,
                                   QuadratureRule rule = QuadratureRule::GaussKronrod);

// Explicit loop over all positive/negative pairs, ties 1/2.
double brute_force_auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace lgcp
