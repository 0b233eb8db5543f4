#include "lgcp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <random>

#include "lgcp/error.hpp"
#include "lgcp/log.hpp"

namespace lgcp {

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l != 0 ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("ROC needs both classes present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.fpr.push_back(0.0);
  roc.tpr.push_back(0.0);
  // numerator counts concordant pairs plus half the tied pairs, in halves.
  double numerator = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t a = 0; a < n;) {
    std::size_t b = a;
    std::size_t gp = 0, gn = 0;
    while (b < n && scores[order[b]] == scores[order[a]]) {
      (labels[order[b]] != 0 ? gp : gn) += 1;
      ++b;
    }
    numerator += static_cast<double>(gn) * (static_cast<double>(tp) + 0.5 * static_cast<double>(gp));
    tp += gp;
    fp += gn;
    roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(n_neg));
    roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
    a = b;
  }
  roc.auc = numerator / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return roc;
}

const char* to_string(HosmerClass c) {
  switch (c) {
    case HosmerClass::Poor: return "poor";
    case HosmerClass::Acceptable: return "acceptable";
    case HosmerClass::Excellent: return "excellent";
    case HosmerClass::Outstanding: return "outstanding";
  }
  return "?";
}

HosmerClass hosmer_class(double auc) {
  if (auc >= 0.9) return HosmerClass::Outstanding;
  if (auc >= 0.8) return HosmerClass::Excellent;
  if (auc >= 0.7) return HosmerClass::Acceptable;
  return HosmerClass::Poor;
}

namespace {

double sample_variance(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / (n - 1.0);
}

}  // namespace

double r2_counts(std::span<const double> observed, std::span<const double> predicted) {
  if (observed.size() != predicted.size()) throw DataError("observed and predicted differ in length");
  if (observed.size() < 2) throw DataError("R2 needs at least 2 units");
  const double vy = sample_variance(observed);
  if (!(vy > 0)) throw DataError("R2 undefined for constant observed counts");
  std::vector<double> resid(observed.size());
  for (std::size_t k = 0; k < observed.size(); ++k) resid[k] = observed[k] - predicted[k];
  return 1.0 - sample_variance(resid) / vy;
}

double rce_counts(std::span<const double> observed, std::span<const double> predicted) {
  if (observed.size() != predicted.size()) throw DataError("observed and predicted differ in length");
  double total = 0.0, abs_err = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    total += observed[k];
    abs_err += std::abs(observed[k] - predicted[k]);
  }
  if (!(total > 0)) throw DataError("RCE undefined when no events are observed");
  return 1.0 - abs_err / total;
}

std::vector<std::vector<std::size_t>> CvPlan::members() const {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t i = 0; i < fold.size(); ++i) out[fold[i]].push_back(i);
  return out;
}

std::vector<std::size_t> CvPlan::training_rows(int f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (fold[i] != f) out.push_back(i);
  return out;
}

CvPlan kfold_split(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (n < static_cast<std::size_t>(k)) throw DataError("fewer rows than folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  CvPlan plan{k, seed, std::vector<int>(n)};
  for (std::size_t p = 0; p < n; ++p) plan.fold[perm[p]] = static_cast<int>(p % k);
  return plan;
}

CvPlan blocked_kfold_split(const MappingPartition& partition, int k, std::uint64_t seed) {
  const CvPlan units = kfold_split(partition.n_units(), k, seed);
  CvPlan plan{k, seed, std::vector<int>(partition.unit_of_row.size())};
  for (std::size_t i = 0; i < plan.fold.size(); ++i) plan.fold[i] = units.fold[partition.unit_of_row[i]];
  return plan;
}

std::vector<PartitionMetrics> evaluate_intensity(const PixelTable& table, std::span<const double> lambda,
                                                 const std::vector<std::string>& partitions) {
  std::vector<PartitionMetrics> out;
  auto score = [&](const std::string& name, const MappingPartition& part) {
    IntensitySurface surf;
    surf.lambda.assign(lambda.begin(), lambda.end());
    const UnitIntensity u = aggregate_intensity(surf, part, table.count);
    std::vector<double> obs(u.observed.begin(), u.observed.end());
    std::vector<int> labels;
    for (auto c : u.observed) labels.push_back(c > 0 ? 1 : 0);
    PartitionMetrics m;
    m.partition = name;
    // Scores are intensities: same ranking as susceptibility without its
    // saturation at 1 in floating point. Undefined metrics are reported as NaN.
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto guarded = [&](auto f) {
      try {
        return f();
      } catch (const DataError&) {
        return nan;
      }
    };
    m.auc = guarded([&] { return roc_auc(u.lambda, labels).auc; });
    m.r2 = guarded([&] { return r2_counts(obs, u.lambda); });
    m.rce = guarded([&] { return rce_counts(obs, u.lambda); });
    out.push_back(m);
  };
  score("pixel", pixel_partition(table));
  for (const auto& p : partitions)
    if (p != "pixel") score(p, make_partition(table, p));
  return out;
}

CvResult run_cv(const ModelSpec& spec, const PixelTable& table, const CvPlan& plan, const CvOptions& options) {
  if (plan.fold.size() != table.size()) throw DataError("CV plan does not match the table");
  const auto folds = plan.members();
  CvResult res;
  res.oos_lambda.assign(table.size(), std::numeric_limits<double>::quiet_NaN());
  res.folds.resize(plan.k);

  auto run_fold = [&](int f) {
    const auto train = plan.training_rows(f);
    try {
      const LatentLayout layout = assemble_layout(spec, table, std::span<const std::size_t>(train));
      const FitData data = make_fit_data(layout, table, std::span<const std::size_t>(train));
      const PosteriorResult post = fit(layout, data, options.fit);
      const IntensitySurface surf = pixel_intensity(post, options.estimator);
      for (auto i : folds[f]) res.oos_lambda[i] = surf.lambda[i];
    } catch (const std::exception& e) {
      throw NumericalError("fold " + std::to_string(f) + " failed: " + e.what());
    }
  };
  if (options.workers > 1) {
    std::vector<std::future<void>> fut;
    const int w = std::min(options.workers, plan.k);
    for (int t = 0; t < w; ++t)
      fut.push_back(std::async(std::launch::async, [&, t] {
        for (int f = t; f < plan.k; f += w) run_fold(f);
      }));
    for (auto& x : fut) x.get();
  } else {
    for (int f = 0; f < plan.k; ++f) run_fold(f);
  }

  std::vector<double> fold_aucs;
  for (int f = 0; f < plan.k; ++f) {
    FoldResult& fr = res.folds[f];
    fr.fold = f;
    fr.n = folds[f].size();
    std::vector<double> s;
    std::vector<int> l;
    for (auto i : folds[f]) {
      s.push_back(res.oos_lambda[i]);
      l.push_back(table.count[i] > 0 ? 1 : 0);
      fr.n_positive += table.count[i] > 0 ? 1 : 0;
    }
    if (fr.n_positive == 0 || fr.n_positive == fr.n) {
      fr.auc = std::numeric_limits<double>::quiet_NaN();
      log::warning("fold " + std::to_string(f) + " has a single class; AUC undefined");
      continue;
    }
    fr.roc = roc_auc(s, l);
    fr.auc = fr.roc.auc;
    fold_aucs.push_back(fr.auc);
  }
  if (!fold_aucs.empty()) {
    res.mean_fold_auc = std::accumulate(fold_aucs.begin(), fold_aucs.end(), 0.0) / fold_aucs.size();
    res.min_fold_auc = *std::min_element(fold_aucs.begin(), fold_aucs.end());
    res.max_fold_auc = *std::max_element(fold_aucs.begin(), fold_aucs.end());
  }

  std::vector<double> s;
  std::vector<int> l;
  for (std::size_t i = 0; i < table.size(); ++i) {
    s.push_back(res.oos_lambda[i]);
    l.push_back(table.count[i] > 0 ? 1 : 0);
  }
  res.pooled_roc = roc_auc(s, l);
  res.pooled_auc = res.pooled_roc.auc;
  res.pooled = evaluate_intensity(table, res.oos_lambda, options.partitions);
  return res;
}

}  // namespace lgcp
