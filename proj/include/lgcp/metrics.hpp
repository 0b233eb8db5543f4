#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lgcp/inference.hpp"
#include "lgcp/predict.hpp"

namespace lgcp {

struct RocCurve {
  std::vector<double> fpr;  // from (0,0) to (1,1), nondecreasing
  std::vector<double> tpr;
  double auc = 0.5;
};

// Sweeps every distinct score threshold; AUC counts tied pairs as 1/2.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

enum class HosmerClass { Poor, Acceptable, Excellent, Outstanding };
const char* to_string(HosmerClass c);
// [0.7, 0.8) acceptable, [0.8, 0.9) excellent, >= 0.9 outstanding; below 0.7
// is labelled poor.
HosmerClass hosmer_class(double auc);

// 1 - Var(Y - lambda) / Var(Y) with sample variances.
double r2_counts(std::span<const double> observed, std::span<const double> predicted);
// 1 - sum|Y - lambda| / sum Y.
double rce_counts(std::span<const double> observed, std::span<const double> predicted);

struct CvPlan {
  int k = 10;
  std::uint64_t seed = 0;
  std::vector<int> fold;  // per pixel row, 0..k-1

  std::vector<std::vector<std::size_t>> members() const;
  std::vector<std::size_t> training_rows(int f) const;
};

CvPlan kfold_split(std::size_t n, int k, std::uint64_t seed);
// Whole units are assigned to folds (spatially blocked variant).
CvPlan blocked_kfold_split(const MappingPartition& partition, int k, std::uint64_t seed);

struct PartitionMetrics {
  std::string partition;
  int fold = -1;  // -1 = pooled
  double auc = 0.0;
  double r2 = 0.0;
  double rce = 0.0;
};

// Pixel AUC plus unit-level AUC, R2 and RCE for each partition, from pixel
// intensities and observed counts.
std::vector<PartitionMetrics> evaluate_intensity(const PixelTable& table, std::span<const double> lambda,
                                                 const std::vector<std::string>& partitions);

struct FoldResult {
  int fold = 0;
  std::size_t n = 0;
  std::size_t n_positive = 0;
  double auc = 0.0;  // NaN when the fold has one class only
  RocCurve roc;
};

struct CvResult {
  std::vector<FoldResult> folds;
  std::vector<double> oos_lambda;  // out-of-sample intensity per pixel
  RocCurve pooled_roc;
  double pooled_auc = 0.0;
  double mean_fold_auc = 0.0;
  double min_fold_auc = 0.0;
  double max_fold_auc = 0.0;
  std::vector<PartitionMetrics> pooled;  // includes the "pixel" row
};

struct CvOptions {
  FitOptions fit;
  IntensityEstimator estimator = IntensityEstimator::LognormalMean;
  std::vector<std::string> partitions;  // unit-level metrics
  int workers = 1;
};

// Each fold's model is assembled (standardization, bin edges) and fitted on
// the other folds only, then predicts the held-out pixels.
CvResult run_cv(const ModelSpec& spec, const PixelTable& table, const CvPlan& plan,
                const CvOptions& options = {});

}  // namespace lgcp
