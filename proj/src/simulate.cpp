#include "lgcp/simulate.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "lgcp/csv.hpp"
#include "lgcp/error.hpp"
#include "lgcp/gmrf.hpp"
#include "lgcp/metrics.hpp"
#include "lgcp/predict.hpp"

namespace lgcp {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void SimulationConfig::validate() const {
  if (width < 1 || height < 1) throw ConfigError("simulation grid must have positive dimensions");
  const int n = width * height;
  if (n_units < 1 || n_units > n) throw ConfigError("slope unit count must be in 1..pixels");
  if (n_catchments < 1 || n_catchments > n_units) throw ConfigError("catchment count must be in 1..units");
  if (n_admin < 1 || n_admin > n_catchments) throw ConfigError("admin count must be in 1..catchments");
  if (sigma0 < 0) throw ConfigError("sigma0 must be >= 0");
  if (!(trigger_scale > 0)) throw ConfigError("trigger scale must be positive");
}

std::vector<int> grow_regions(const std::vector<std::vector<int>>& neighbors, int n_regions,
                              std::uint64_t seed) {
  const int n = static_cast<int>(neighbors.size());
  if (n_regions < 1 || n_regions > n) throw ConfigError("region count must be in 1..nodes");
  std::mt19937_64 rng(seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<int> label(n, -1);
  std::vector<std::pair<int, int>> frontier;  // (node, region)
  for (int r = 0; r < n_regions; ++r) {
    label[order[r]] = r;
    for (int k : neighbors[order[r]]) frontier.emplace_back(k, r);
  }
  while (!frontier.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, frontier.size() - 1);
    const std::size_t at = pick(rng);
    const auto [node, region] = frontier[at];
    frontier[at] = frontier.back();
    frontier.pop_back();
    if (label[node] >= 0) continue;
    label[node] = region;
    for (int k : neighbors[node])
      if (label[k] < 0) frontier.emplace_back(k, region);
  }
  if (std::find(label.begin(), label.end(), -1) != label.end())
    throw DataError("region growing left nodes unassigned; graph is disconnected");
  return label;
}

SimulatedDataset simulate_lgcp(const SimulationConfig& cfg) {
  cfg.validate();
  const int w = cfg.width, h = cfg.height, n = w * h;
  SimulatedDataset ds;
  PixelTable& t = ds.table;

  std::vector<std::vector<int>> pixel_nb(n);
  for (int iy = 0; iy < h; ++iy)
    for (int ix = 0; ix < w; ++ix) {
      const int i = iy * w + ix;
      if (ix + 1 < w) {
        pixel_nb[i].push_back(i + 1);
        pixel_nb[i + 1].push_back(i);
      }
      if (iy + 1 < h) {
        pixel_nb[i].push_back(i + w);
        pixel_nb[i + w].push_back(i);
      }
    }
  for (int i = 0; i < n; ++i) {
    t.pixel_id.push_back(i + 1);
    t.x.push_back(i % w);
    t.y.push_back(i / w);
  }

  const auto unit_of_pixel = grow_regions(pixel_nb, cfg.n_units, derive_seed(cfg.seed, 0));
  auto& su = t.partitions["slope_unit"];
  for (int i = 0; i < n; ++i) su.push_back(unit_of_pixel[i] + 1);
  ds.slope_units = make_partition(t, "slope_unit");
  const AdjacencyGraph unit_graph = build_adjacency(t, ds.slope_units, GridGeometry{1.0});

  const auto catchment_of_unit = grow_regions(unit_graph.neighbors, cfg.n_catchments, derive_seed(cfg.seed, 1));
  auto& ca = t.partitions["catchment"];
  for (int i = 0; i < n; ++i) ca.push_back(catchment_of_unit[ds.slope_units.unit_of_row[i]] + 1);
  const MappingPartition catchments = make_partition(t, "catchment");
  const AdjacencyGraph catchment_graph = build_adjacency(t, catchments, GridGeometry{1.0});
  const auto admin_of_catchment = grow_regions(catchment_graph.neighbors, cfg.n_admin, derive_seed(cfg.seed, 2));
  auto& ad = t.partitions["admin"];
  for (int i = 0; i < n; ++i) ad.push_back(admin_of_catchment[catchments.unit_of_row[i]] + 1);

  std::mt19937_64 cov_rng(derive_seed(cfg.seed, 3));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < cfg.beta.size(); ++k) {
    auto& col = t.continuous["cov_" + std::to_string(k + 1)];
    col.resize(n);
    for (double& v : col) v = normal(cov_rng);
  }

  std::mt19937_64 trig_rng(derive_seed(cfg.seed, 4));
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h);
  const double ex = ux(trig_rng), ey = uy(trig_rng);
  ds.trigger.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double d = std::hypot(t.x[i] - ex, t.y[i] - ey);
    ds.trigger[i] = cfg.trigger_amplitude * std::exp(-d / cfg.trigger_scale);
  }
  for (int b = 0; b < cfg.ridge_bumps; ++b) {
    const double bx = ux(trig_rng), by = uy(trig_rng);
    for (int i = 0; i < n; ++i) {
      const double d2 = (t.x[i] - bx) * (t.x[i] - bx) + (t.y[i] - by) * (t.y[i] - by);
      ds.trigger[i] += cfg.ridge_amplitude * std::exp(-d2 / (2.0 * 1.5 * 1.5));
    }
  }
  const double tmean = std::accumulate(ds.trigger.begin(), ds.trigger.end(), 0.0) / n;
  for (double& v : ds.trigger) v -= tmean;
  t.continuous["trigger"] = ds.trigger;

  const int m = static_cast<int>(ds.slope_units.n_units());
  if (cfg.sigma0 > 0 && m >= 2) {
    const StructureMatrix s = scale_structure(besag_structure(unit_graph));
    ds.lse = sample_constrained(s, 1.0 / (cfg.sigma0 * cfg.sigma0), derive_seed(cfg.seed, 5));
  } else {
    ds.lse = Eigen::VectorXd::Zero(m);
  }

  ds.eta.resize(n);
  ds.lambda.resize(n);
  t.count.resize(n);
  std::mt19937_64 count_rng(derive_seed(cfg.seed, 6));
  for (int i = 0; i < n; ++i) {
    double eta = cfg.beta0;
    if (!cfg.constant_eta) {
      for (std::size_t k = 0; k < cfg.beta.size(); ++k)
        eta += cfg.beta[k] * t.continuous["cov_" + std::to_string(k + 1)][i];
      eta += ds.trigger[i] + ds.lse[ds.slope_units.unit_of_row[i]];
    }
    ds.eta[i] = eta;
    ds.lambda[i] = std::exp(eta);
    std::poisson_distribution<std::int64_t> pois(ds.lambda[i]);
    t.count[i] = pois(count_rng);
  }
  return ds;
}

std::string format_truth(const SimulatedDataset& d) {
  std::ostringstream out;
  out << "pixel_id,eta,lambda,trigger,lse\n";
  for (std::size_t i = 0; i < d.table.size(); ++i)
    out << d.table.pixel_id[i] << ',' << csv::format_double(d.eta[i]) << ','
        << csv::format_double(d.lambda[i]) << ',' << csv::format_double(d.trigger[i]) << ','
        << csv::format_double(d.lse[d.slope_units.unit_of_row[i]]) << '\n';
  return out.str();
}

namespace {

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0) || !(sbb > 0)) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

RecoveryReport recovery_experiment(const SimulationConfig& config, const RecoveryOptions& options) {
  const SimulatedDataset ds = simulate_lgcp(config);
  const PixelTable& t = ds.table;

  ModelSpec shared;
  for (std::size_t k = 0; k < config.beta.size(); ++k) shared.linear.push_back("cov_" + std::to_string(k + 1));
  ModelSpec trigger_only = shared;
  trigger_only.rw1.push_back({"trigger", options.trigger_bins});
  ModelSpec lse_only = shared;
  lse_only.besag = "slope_unit";
  ModelSpec both = trigger_only;
  both.besag = "slope_unit";

  std::vector<int> labels;
  for (auto c : t.count) labels.push_back(c > 0 ? 1 : 0);
  const double observed = static_cast<double>(t.total_count());

  RecoveryReport rep;
  struct Fitted {
    LatentLayout layout;
    PosteriorResult post;
    double auc;
  };
  auto run = [&](const ModelSpec& spec) {
    LatentLayout layout = assemble_layout(spec, t);
    const FitData data = make_fit_data(layout, t);
    PosteriorResult post = fit(layout, data, options.fit);
    const IntensitySurface surf = pixel_intensity(post, IntensityEstimator::LognormalMean);
    const std::vector<double>& score = surf.lambda;  // ranks like susceptibility, no saturation
    const double total = std::accumulate(surf.lambda.begin(), surf.lambda.end(), 0.0);
    if (observed > 0)
      rep.fitted_total_ratio_error = std::max(rep.fitted_total_ratio_error, std::abs(total - observed) / observed);
    const double auc = roc_auc(score, labels).auc;
    return Fitted{std::move(layout), std::move(post), auc};
  };

  // A flat trigger cannot be binned; only the LSE-only model is fitted then.
  const bool flat_trigger =
      std::ranges::all_of(ds.trigger, [&](double v) { return v == ds.trigger.front(); });
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const Fitted f_lse = run(lse_only);
  std::optional<Fitted> f_trigger, f_both;
  if (!flat_trigger) {
    f_trigger = run(trigger_only);
    f_both = run(both);
  }
  rep.auc_trigger_only = f_trigger ? f_trigger->auc : nan;
  rep.auc_lse_only = f_lse.auc;
  rep.auc_trigger_lse = f_both ? f_both->auc : nan;

  const int m = static_cast<int>(ds.slope_units.n_units());
  std::vector<double> unit_trigger(m, 0.0);
  const auto sizes = ds.slope_units.unit_sizes();
  for (std::size_t i = 0; i < t.size(); ++i) unit_trigger[ds.slope_units.unit_of_row[i]] += ds.trigger[i];
  for (int j = 0; j < m; ++j) unit_trigger[j] /= static_cast<double>(sizes[j]);

  const LatentBlock* b = f_lse.layout.besag_block();
  std::vector<double> lse_mean(f_lse.post.mean.data() + b->offset, f_lse.post.mean.data() + b->offset + b->length);
  rep.correlation = pearson(lse_mean, unit_trigger);

  const auto sig = lse_significance(f_lse.post, f_lse.layout);
  rep.fraction_not_significant =
      static_cast<double>(std::count(sig.begin(), sig.end(), Significance::NotSignificant)) / sig.size();

  const Fitted& cov_fit = f_both ? *f_both : f_lse;
  const LatentBlock* bb = cov_fit.layout.besag_block();
  int covered = 0;
  for (int j = 0; j < m; ++j) {
    const int k = bb->offset + j;
    if (cov_fit.post.q025[k] <= ds.lse[j] && ds.lse[j] <= cov_fit.post.q975[k]) ++covered;
  }
  rep.coverage = static_cast<double>(covered) / m;
  return rep;
}

namespace {

// Log of the unnormalized posterior density exp(loglik + log prior) for a
// small unconstrained model, evaluated directly from dense algebra.
class DenseJoint {
 public:
  DenseJoint(const LatentLayout& layout, const FitData& data, const Eigen::VectorXd& theta)
      : a_(data.design), y_(data.counts), lfact_(data.log_factorial_sum) {
    q_ = Eigen::MatrixXd(prior_precision(layout, theta).q);
    Eigen::LLT<Eigen::MatrixXd> llt(q_);
    if (llt.info() != Eigen::Success) throw NumericalError("oracle prior precision is not positive definite");
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double n = static_cast<double>(q_.rows());
    log_norm_ = -0.5 * n * std::log(2.0 * std::numbers::pi) + 0.5 * logdet;
  }

  int dim() const { return static_cast<int>(q_.rows()); }

  double operator()(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd eta = a_ * x;
    double ll = -lfact_;
    for (int i = 0; i < eta.size(); ++i) ll += y_[i] * eta[i] - std::exp(eta[i]);
    return ll + log_norm_ - 0.5 * x.dot(q_ * x);
  }

 private:
  Eigen::MatrixXd a_;
  Eigen::VectorXd y_;
  double lfact_;
  Eigen::MatrixXd q_;
  double log_norm_ = 0.0;
};

Eigen::VectorXd coordinate_ascent(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x) {
  for (int sweep = 0; sweep < 500; ++sweep) {
    double moved = 0.0;
    for (int k = 0; k < x.size(); ++k) {
      auto neg = [&](double v) {
        Eigen::VectorXd z = x;
        z[k] = v;
        return -f(z);
      };
      // Expand a bracket around the current value, then Brent.
      double width = 1.0;
      while (width < 1e4 && (neg(x[k] - width) <= neg(x[k]) || neg(x[k] + width) <= neg(x[k]))) {
        const double best = neg(x[k] - width) < neg(x[k] + width) ? x[k] - width : x[k] + width;
        moved = std::max(moved, std::abs(best - x[k]));
        x[k] = best;
        width *= 2.0;
      }
      const auto r = boost::math::tools::brent_find_minima(neg, x[k] - width, x[k] + width, 60);
      moved = std::max(moved, std::abs(r.first - x[k]));
      x[k] = r.first;
    }
    if (moved < 1e-12) break;
  }
  return x;
}

struct Integrals {
  double log_z;
  Eigen::VectorXd mean;
};

Integrals integrate_latent(const DenseJoint& joint, QuadratureRule rule) {
  const int n = joint.dim();
  const Eigen::VectorXd center = coordinate_ascent(std::cref(joint), Eigen::VectorXd::Zero(n));
  const double fmax = joint(center);

  // Marginal widths from a finite-difference Hessian at the maximum.
  Eigen::MatrixXd hess(n, n);
  const double hstep = 1e-4;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd pp = center, pm = center, mp = center, mm = center;
      pp[i] += hstep; pp[j] += hstep;
      pm[i] += hstep; pm[j] -= hstep;
      mp[i] -= hstep; mp[j] += hstep;
      mm[i] -= hstep; mm[j] -= hstep;
      hess(i, j) = -(joint(pp) - joint(pm) - joint(mp) + joint(mm)) / (4.0 * hstep * hstep);
    }
  const Eigen::MatrixXd cov = hess.inverse();
  Eigen::VectorXd lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    const double s = std::sqrt(std::max(cov(i, i), 1e-12));
    lo[i] = center[i] - 14.0 * s;
    hi[i] = center[i] + 14.0 * s;
  }

  auto integrate1 = [&](const std::function<double(double)>& g, double a, double b) {
    if (rule == QuadratureRule::GaussKronrod)
      return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, a, b, 15, 1e-11);
    boost::math::quadrature::tanh_sinh<double> ts;
    return ts.integrate(g, a, b, 1e-11);
  };

  // weight index -1 integrates the density, k integrates (x_k - center_k) * density.
  auto nested = [&](int weight) {
    Eigen::VectorXd x = center;
    std::function<double(int)> level = [&](int d) -> double {
      return integrate1(
          [&, d](double v) {
            x[d] = v;
            if (d + 1 < n) return level(d + 1);
            const double dens = std::exp(joint(x) - fmax);
            return weight < 0 ? dens : (x[weight] - center[weight]) * dens;
          },
          lo[d], hi[d]);
    };
    return level(0);
  };

  Integrals out;
  const double z = nested(-1);
  out.log_z = fmax + std::log(z);
  out.mean.resize(n);
  for (int k = 0; k < n; ++k) out.mean[k] = center[k] + nested(k) / z;
  return out;
}

}  // namespace

OracleResult tiny_posterior_oracle(const LatentLayout& layout, const FitData& data,
                                   std::optional<Eigen::VectorXd> theta, QuadratureRule rule) {
  if (layout.dim > 3) throw ConfigError("quadrature oracle supports at most 3 latent dimensions");
  if (!layout.constraints.empty()) throw ConfigError("quadrature oracle does not support constrained models");
  if (theta) {
    const Integrals in = integrate_latent(DenseJoint(layout, data, *theta), rule);
    return {in.log_z, in.mean};
  }
  if (layout.n_hyper() != 1) throw ConfigError("quadrature oracle integrates over one hyperparameter only");
  const auto priors = layout.priors();
  auto log_joint_theta = [&](double t) {
    Eigen::VectorXd th(1);
    th[0] = t;
    const Integrals in = integrate_latent(DenseJoint(layout, data, th), rule);
    return std::pair{in.log_z + pc_prior_logdensity(th, priors), in.mean};
  };
  const auto r = boost::math::tools::brent_find_minima(
      [&](double t) { return -log_joint_theta(t).first; }, -10.0, 15.0, 40);
  const double tmax = r.first;
  const double fmax = -r.second;
  double lo = tmax, hi = tmax;
  while (log_joint_theta(lo).first > fmax - 30.0 && lo > tmax - 40.0) lo -= 1.0;
  while (log_joint_theta(hi).first > fmax - 30.0 && hi < tmax + 40.0) hi += 1.0;

  const int n = layout.dim;
  Eigen::VectorXd mean_acc = Eigen::VectorXd::Zero(n);
  double z = 0.0;
  auto density = [&](double t) { return std::exp(log_joint_theta(t).first - fmax); };
  z = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(density, lo, hi, 10, 1e-9);
  for (int k = 0; k < n; ++k) {
    auto moment = [&, k](double t) {
      const auto [lj, mean] = log_joint_theta(t);
      return mean[k] * std::exp(lj - fmax);
    };
    mean_acc[k] = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(moment, lo, hi, 10, 1e-9);
  }
  return {fmax + std::log(z), mean_acc / z};
}

double brute_force_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  double num = 0.0;
  std::size_t np = 0, nn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    ++np;
  }
  nn = scores.size() - np;
  if (np == 0 || nn == 0) throw DataError("brute-force AUC needs both classes");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j])
        num += 1.0;
      else if (scores[i] == scores[j])
        num += 0.5;
    }
  }
  return num / (static_cast<double>(np) * static_cast<double>(nn));
}

}  // namespace lgcp
