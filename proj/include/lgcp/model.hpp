#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgcp/gmrf.hpp"
#include "lgcp/ingest.hpp"

namespace lgcp {

struct Rw1Term {
  std::string covariate;
  int bins = 20;
};

// Declarative linear predictor: intercept + linear covariates + optional
// Besag effect on a partition + RW1 effects on binned covariates + iid
// effects on categorical covariates.
struct ModelSpec {
  bool intercept = true;
  std::vector<std::string> linear;
  std::optional<std::string> besag;  // partition name
  std::string besag_edge_list;       // optional edge-list CSV; empty => grid adjacency
  double grid_spacing = 1.0;
  std::vector<Rw1Term> rw1;
  std::vector<std::string> iid;
  double pc_median = 0.1;
  std::map<std::string, double> pc_median_override;  // keyed by effect name
  double fixed_effect_precision = 1e-6;              // Normal(0, 1000^2)
  bool standardize = true;                           // linear covariates only

  std::vector<CovariateSpec> covariate_specs() const;
  TableSchema schema(const std::vector<std::string>& extra_partitions = {}) const;
  std::vector<std::string> effect_names() const;
  void validate() const;  // throws ConfigError
};

enum class BlockKind { Intercept, Linear, Besag, Rw1, Iid };

struct LatentBlock {
  std::string name;
  BlockKind kind = BlockKind::Intercept;
  int offset = 0;
  int length = 0;
  int hyper = -1;  // index into theta, -1 for fixed effects
  StructureMatrix structure;         // random blocks only, scaled
  double log_pdet = 0.0;             // of structure
  std::vector<std::string> labels;   // per coordinate, for reports
  std::vector<double> bin_edges;     // rw1 only
  std::vector<std::int64_t> unit_ids;  // besag only

  bool random() const { return hyper >= 0; }
};

struct PCPrior {
  double median = 0.1;  // on the standard-deviation scale
  double rate() const;
};

struct HyperSpec {
  std::string name;
  int block = 0;
  PCPrior prior;
};

struct LatentLayout {
  std::vector<LatentBlock> blocks;
  std::vector<HyperSpec> hypers;
  int dim = 0;
  SpMat design;  // one row per table row: eta = design * x
  std::vector<LinearConstraint> constraints;  // over the full latent vector
  std::vector<Standardization> standardization;
  double fixed_effect_precision = 1e-6;
  std::optional<AdjacencyGraph> graph;

  const LatentBlock& block(const std::string& name) const;
  const LatentBlock* find_block(const std::string& name) const;
  const LatentBlock* besag_block() const;
  int n_hyper() const { return static_cast<int>(hypers.size()); }
  std::vector<PCPrior> priors() const;
  Eigen::MatrixXd constraint_matrix() const;
};

// Builds blocks, structures and the design for every row of the table. When
// training_rows is given, standardization and bin edges are computed from
// those rows only and applied to the rest.
LatentLayout assemble_layout(const ModelSpec& spec, const PixelTable& table,
                             std::optional<std::span<const std::size_t>> training_rows = {});

SpMat select_rows(const SpMat& design, std::span<const std::size_t> rows);

struct PriorPrecision {
  SpMat q;
  // Log of the product of nonzero eigenvalues of q; rank = dim - #constraints.
  double log_det = 0.0;
  int rank = 0;
};

PriorPrecision prior_precision(const LatentLayout& layout, const Eigen::VectorXd& theta);

// Sum over blocks of the log density of theta_k = log tau_k when
// sigma_k = exp(-theta_k / 2) ~ Exponential(ln 2 / median_k).
double pc_prior_logdensity(const Eigen::VectorXd& theta, std::span<const PCPrior> priors);

}  // namespace lgcp
