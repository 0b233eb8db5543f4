#include "lgcp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "lgcp/error.hpp"
#include "lgcp/log.hpp"

namespace lgcp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

using RowMajor = Eigen::SparseMatrix<double, Eigen::RowMajor>;

Eigen::VectorXd project_out(const Eigen::MatrixXd& c, const Eigen::LDLT<Eigen::MatrixXd>& cct,
                            const Eigen::VectorXd& g) {
  if (c.rows() == 0) return g;
  return g - c.transpose() * cct.solve(c * g);
}

SpMat posterior_precision(const SpMat& q, const SpMat& a, const Eigen::VectorXd& lambda) {
  SpMat h = a.transpose() * lambda.asDiagonal() * a;
  h += q;
  h.makeCompressed();
  return h;
}

// H + C'C. On {Cx = 0} both define the same Gaussian, but the sum stays
// positive definite when intrinsic blocks are confounded with each other
// (e.g. the constant directions of a Besag and an RW1 effect).
SpMat augment_with_constraints(const SpMat& h, const Eigen::MatrixXd& c) {
  if (c.rows() == 0) return h;
  std::vector<Triplet> trips;
  for (int r = 0; r < c.rows(); ++r) {
    std::vector<int> nz;
    for (int j = 0; j < c.cols(); ++j)
      if (c(r, j) != 0.0) nz.push_back(j);
    for (int i : nz)
      for (int j : nz) trips.emplace_back(i, j, c(r, i) * c(r, j));
  }
  SpMat cc(h.rows(), h.cols());
  cc.setFromTriplets(trips.begin(), trips.end());
  SpMat out = h + cc;
  out.makeCompressed();
  return out;
}

// log det of the Gaussian with precision H restricted to {Cx = 0}.
double constrained_log_det(const SparseCholesky& factor, const Eigen::MatrixXd& c) {
  double ld = factor.log_determinant();
  if (c.rows() == 0) return ld;
  const Eigen::MatrixXd w = factor.solve(Eigen::MatrixXd(c.transpose()));
  const Eigen::MatrixXd cw = c * w;
  const Eigen::MatrixXd cct = c * c.transpose();
  Eigen::LLT<Eigen::MatrixXd> l1(cw), l2(cct);
  if (l1.info() != Eigen::Success || l2.info() != Eigen::Success)
    throw NumericalError("constraint matrix is rank deficient");
  auto logdet = [](const Eigen::LLT<Eigen::MatrixXd>& l) {
    return 2.0 * l.matrixLLT().diagonal().array().log().sum();
  };
  return ld + logdet(l1) - logdet(l2);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> futures;
  const std::size_t w = std::min<std::size_t>(workers, n);
  for (std::size_t t = 0; t < w; ++t)
    futures.push_back(std::async(std::launch::async, [&, t] {
      for (std::size_t i = t; i < n; i += w) fn(i);
    }));
  for (auto& f : futures) f.get();
}

std::string format_theta(const Eigen::VectorXd& t) {
  std::ostringstream s;
  s << '(';
  for (int i = 0; i < t.size(); ++i) s << (i ? ", " : "") << t[i];
  s << ')';
  return s.str();
}

void attach_marginals(GaussianApprox& approx, const LatentLayout& layout) {
  const Eigen::MatrixXd c = layout.constraint_matrix();
  auto factor = std::make_shared<const SparseCholesky>(augment_with_constraints(approx.precision, c));
  approx.covariance.emplace(factor, c);
  approx.sd = approx.covariance->marginal_variances().cwiseMax(0.0).cwiseSqrt();
}

}  // namespace

FitData make_fit_data(SpMat design, const Eigen::VectorXd& counts) {
  if (design.rows() != counts.size()) throw DataError("design and counts differ in length");
  FitData d;
  d.design = std::move(design);
  d.design.makeCompressed();
  d.counts = counts;
  for (int i = 0; i < counts.size(); ++i) {
    if (counts[i] < 0) throw DataError("negative count in row " + std::to_string(i + 1));
    d.log_factorial_sum += std::lgamma(counts[i] + 1.0);
  }
  return d;
}

FitData make_fit_data(const LatentLayout& layout, const PixelTable& table,
                      std::optional<std::span<const std::size_t>> rows) {
  if (!rows) {
    Eigen::VectorXd y(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) y[i] = static_cast<double>(table.count[i]);
    return make_fit_data(layout.design, y);
  }
  Eigen::VectorXd y(rows->size());
  for (std::size_t a = 0; a < rows->size(); ++a) y[a] = static_cast<double>(table.count.at((*rows)[a]));
  return make_fit_data(select_rows(layout.design, *rows), y);
}

ConstrainedCovariance::ConstrainedCovariance(std::shared_ptr<const SparseCholesky> factor,
                                             const Eigen::MatrixXd& c)
    : factor_(std::move(factor)), selected_(factor_->selected_inverse()) {
  if (c.rows() > 0) {
    w_ = factor_->solve(Eigen::MatrixXd(c.transpose()));
    const Eigen::MatrixXd cw = c * w_;
    cw_inv_ = cw.ldlt().solve(Eigen::MatrixXd::Identity(cw.rows(), cw.cols()));
  }
}

double ConstrainedCovariance::raw(int i, int j) const {
  if (selected_.contains(i, j)) return selected_(i, j);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(factor_->n());
  e[j] = 1.0;
  return factor_->solve(e)[i];
}

double ConstrainedCovariance::operator()(int i, int j) const {
  double v = raw(i, j);
  if (w_.size() > 0) v -= w_.row(i) * cw_inv_ * w_.row(j).transpose();
  return v;
}

Eigen::VectorXd ConstrainedCovariance::marginal_variances() const {
  Eigen::VectorXd d = selected_.diagonal();
  if (w_.size() > 0) d -= ((w_ * cw_inv_).cwiseProduct(w_)).rowwise().sum();
  return d;
}

double ConstrainedCovariance::row_variance(const std::vector<std::pair<int, double>>& row) const {
  double v = 0.0;
  for (std::size_t a = 0; a < row.size(); ++a) {
    v += row[a].second * row[a].second * (*this)(row[a].first, row[a].first);
    for (std::size_t b = a + 1; b < row.size(); ++b)
      v += 2.0 * row[a].second * row[b].second * (*this)(row[a].first, row[b].first);
  }
  return std::max(v, 0.0);
}

GaussianApprox gaussian_approximation(const LatentLayout& layout, const FitData& data,
                                      const Eigen::VectorXd& theta, const NewtonOptions& options,
                                      const Eigen::VectorXd* warm_start, bool with_marginals) {
  const int n = layout.dim;
  if (data.design.cols() != n) throw NumericalError("design does not match the latent layout");
  const PriorPrecision prior = prior_precision(layout, theta);
  const SpMat& a = data.design;
  const Eigen::VectorXd& y = data.counts;
  const Eigen::MatrixXd c = layout.constraint_matrix();
  const Eigen::LDLT<Eigen::MatrixXd> cct(c * c.transpose());

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (warm_start && warm_start->size() == n) {
    x = *warm_start;
  } else if (const auto* b = layout.find_block("(Intercept)"); b && y.size() > 0) {
    x[b->offset] = std::log(std::max(y.mean(), 1e-3));
  }
  correct_to_constraints(layout.constraints, x);

  auto objective = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXd eta = a * v;
    double ll = 0.0;
    for (int i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - std::exp(eta[i]);
    const double f = ll - 0.5 * v.dot(prior.q * v);
    return std::isfinite(f) ? f : -std::numeric_limits<double>::infinity();
  };

  GaussianApprox out;
  out.theta = theta;
  Eigen::VectorXd lambda;
  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd eta = a * x;
    lambda = eta.array().exp();
    const Eigen::VectorXd g = a.transpose() * (y - lambda) - prior.q * x;
    const double gn = project_out(c, cct, g).lpNorm<Eigen::Infinity>();
    out.iterations = iter;
    out.gradient_norm = gn;
    if (gn < options.tolerance) break;
    if (iter >= options.max_iterations)
      throw NumericalError("Newton did not converge at theta " + format_theta(theta) + " after " +
                           std::to_string(iter) + " iterations; gradient norm " + std::to_string(gn));

    const SparseCholesky factor(augment_with_constraints(posterior_precision(prior.q, a, lambda), c));
    Eigen::VectorXd d = factor.solve(g);
    if (c.rows() > 0) {
      const Eigen::MatrixXd w = factor.solve(Eigen::MatrixXd(c.transpose()));
      d -= w * (c * w).ldlt().solve(c * d);
    }
    const double f0 = objective(x);
    const double slack = 1e-12 * (1.0 + std::abs(f0));
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
      Eigen::VectorXd cand = x + step * d;
      if (objective(cand) >= f0 - slack) {
        x = std::move(cand);
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw NumericalError("Newton line search failed at theta " + format_theta(theta) +
                           "; gradient norm " + std::to_string(gn));
    correct_to_constraints(layout.constraints, x);
  }

  out.mode = x;
  out.precision = posterior_precision(prior.q, a, lambda);
  auto factor = std::make_shared<const SparseCholesky>(augment_with_constraints(out.precision, c));

  const Eigen::VectorXd eta = a * x;
  out.log_likelihood = y.dot(eta) - lambda.sum() - data.log_factorial_sum;
  const double rank = static_cast<double>(n - c.rows());
  out.log_prior_latent = -0.5 * rank * kLog2Pi + 0.5 * prior.log_det - 0.5 * x.dot(prior.q * x);
  out.log_gaussian_at_mode = -0.5 * rank * kLog2Pi + 0.5 * constrained_log_det(*factor, c);

  if (with_marginals) {
    out.covariance.emplace(factor, c);
    out.sd = out.covariance->marginal_variances().cwiseMax(0.0).cwiseSqrt();
  }
  return out;
}

ThetaEvaluation log_posterior_theta(const LatentLayout& layout, const FitData& data,
                                    const Eigen::VectorXd& theta, const NewtonOptions& options,
                                    const Eigen::VectorXd* warm_start, const HyperPrior& hyperprior) {
  ThetaEvaluation ev;
  ev.approx = gaussian_approximation(layout, data, theta, options, warm_start, false);
  const auto priors = layout.priors();
  ev.log_hyperprior = hyperprior ? hyperprior(theta) : pc_prior_logdensity(theta, priors);
  ev.log_posterior = ev.approx.log_likelihood + ev.approx.log_prior_latent -
                     ev.approx.log_gaussian_at_mode + ev.log_hyperprior;
  if (!std::isfinite(ev.log_posterior))
    throw NumericalError("non-finite log posterior at theta " + format_theta(theta));
  return ev;
}

OptimizeResult optimize_theta(const LatentLayout& layout, const FitData& data,
                              const Eigen::VectorXd& init, const OptimizeOptions& options) {
  const int d = layout.n_hyper();
  if (init.size() != d) throw NumericalError("initial theta has the wrong dimension");
  std::vector<std::string> trace;
  OptimizeResult res;
  res.theta_hat = init;

  auto evaluate = [&](const Eigen::VectorXd& t, const Eigen::VectorXd* warm) {
    ++res.evaluations;
    try {
      return log_posterior_theta(layout, data, t, options.newton, warm, options.hyperprior);
    } catch (const NumericalError& e) {
      std::string msg = std::string("hyperparameter search failed: ") + e.what() + "\ntrace:";
      const std::size_t from = trace.size() > 10 ? trace.size() - 10 : 0;
      for (std::size_t i = from; i < trace.size(); ++i) msg += "\n  " + trace[i];
      throw NumericalError(msg);
    }
  };

  ThetaEvaluation best = evaluate(res.theta_hat, nullptr);
  res.initial_log_posterior = best.log_posterior;
  trace.push_back(format_theta(res.theta_hat) + " -> " + std::to_string(best.log_posterior));
  if (d == 0) {
    res.log_posterior = best.log_posterior;
    res.mode = best.approx.mode;
    return res;
  }

  // Returns true if some +/- step along a coordinate improves the objective.
  auto sweep = [&](double step) {
    bool improved = false;
    for (int k = 0; k < d; ++k) {
      for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd cand = res.theta_hat;
        cand[k] += sign * step;
        ThetaEvaluation ev = evaluate(cand, &best.approx.mode);
        trace.push_back(format_theta(cand) + " -> " + std::to_string(ev.log_posterior));
        if (ev.log_posterior > best.log_posterior) {
          res.theta_hat = cand;
          best = std::move(ev);
          improved = true;
          break;
        }
      }
    }
    return improved;
  };

  double step = options.initial_step;
  while (true) {
    while (step >= options.min_step) {
      if (res.evaluations > options.max_evaluations)
        throw NumericalError("hyperparameter search exceeded " +
                             std::to_string(options.max_evaluations) + " evaluations");
      if (!sweep(step)) step *= 0.5;
    }
    if (!sweep(options.probe)) break;
    step = 2.0 * options.probe;
  }
  res.log_posterior = best.log_posterior;
  res.mode = best.approx.mode;
  return res;
}

GridIntegration integrate_theta(const LatentLayout& layout, const FitData& data,
                                const OptimizeResult& optimum, const GridOptions& options) {
  const int d = static_cast<int>(optimum.theta_hat.size());
  if (options.radius < 0) throw NumericalError("grid radius must be >= 0");
  const int side = 2 * options.radius + 1;
  std::size_t total = 1;
  for (int k = 0; k < d; ++k) total *= static_cast<std::size_t>(side);

  std::vector<Eigen::VectorXd> points(total);
  for (std::size_t p = 0; p < total; ++p) {
    Eigen::VectorXd t = optimum.theta_hat;
    std::size_t rem = p;
    for (int k = d - 1; k >= 0; --k) {
      const int z = static_cast<int>(rem % side) - options.radius;
      rem /= side;
      t[k] += options.step * z;
    }
    points[p] = t;
  }

  std::vector<ThetaEvaluation> evals(total);
  parallel_for(total, options.workers, [&](std::size_t p) {
    evals[p] = log_posterior_theta(layout, data, points[p], options.newton, &optimum.mode,
                                   options.hyperprior);
  });

  double max_lp = -std::numeric_limits<double>::infinity();
  for (const auto& e : evals) max_lp = std::max(max_lp, e.log_posterior);

  GridIntegration out;
  double wsum = 0.0;
  for (std::size_t p = 0; p < total; ++p) {
    if (evals[p].log_posterior < max_lp - options.cutoff) continue;
    out.grid.points.push_back(points[p]);
    out.grid.log_posterior.push_back(evals[p].log_posterior);
    const double w = std::exp(evals[p].log_posterior - max_lp);
    out.grid.weights.push_back(w);
    wsum += w;
    out.approximations.push_back(std::move(evals[p].approx));
  }
  if (out.grid.points.empty()) throw NumericalError("degenerate theta grid: every point dropped");
  for (double& w : out.grid.weights) w /= wsum;
  parallel_for(out.approximations.size(), options.workers,
               [&](std::size_t g) { attach_marginals(out.approximations[g], layout); });
  return out;
}

double mixture_quantile(std::span<const double> weights, std::span<const double> means,
                        std::span<const double> sds, double p, double tol) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t g = 0; g < means.size(); ++g) {
    lo = std::min(lo, means[g] - 12.0 * sds[g] - 1e-9);
    hi = std::max(hi, means[g] + 12.0 * sds[g] + 1e-9);
  }
  auto cdf = [&](double v) {
    double s = 0.0;
    for (std::size_t g = 0; g < means.size(); ++g) {
      const double c = sds[g] > 0 ? normal_cdf((v - means[g]) / sds[g]) : (v >= means[g] ? 1.0 : 0.0);
      s += weights[g] * c;
    }
    return s;
  };
  while (hi - lo > 0.1 * tol) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

PosteriorResult latent_marginals(const ThetaGrid& grid, std::span<const GaussianApprox> approxs,
                                 const LatentLayout& layout, const SpMat& prediction_design) {
  if (grid.points.empty() || approxs.size() != grid.points.size())
    throw NumericalError("latent_marginals needs one approximation per grid point");
  for (const auto& ap : approxs)
    if (!ap.covariance) throw NumericalError("approximation lacks marginal variances");
  const std::size_t ng = approxs.size();
  const int n = layout.dim;
  const auto& w = grid.weights;

  PosteriorResult r;
  r.grid = grid;
  r.theta_hat = grid.points[std::max_element(grid.log_posterior.begin(), grid.log_posterior.end()) -
                            grid.log_posterior.begin()];

  auto summarize = [&](const std::vector<double>& m, const std::vector<double>& s, double& mean,
                       double& sd, double* q025, double* q975) {
    double mu = 0.0, second = 0.0;
    for (std::size_t g = 0; g < ng; ++g) {
      mu += w[g] * m[g];
      second += w[g] * (s[g] * s[g] + m[g] * m[g]);
    }
    mean = mu;
    sd = std::sqrt(std::max(second - mu * mu, 0.0));
    if (ng == 1) sd = s[0];
    if (q025) {
      *q025 = mixture_quantile(w, m, s, 0.025);
      *q975 = mixture_quantile(w, m, s, 0.975);
    }
  };

  r.mean.resize(n);
  r.sd.resize(n);
  r.q025.resize(n);
  r.q975.resize(n);
  std::vector<double> m(ng), s(ng);
  for (int j = 0; j < n; ++j) {
    for (std::size_t g = 0; g < ng; ++g) {
      m[g] = approxs[g].mode[j];
      s[g] = approxs[g].sd[j];
    }
    summarize(m, s, r.mean[j], r.sd[j], &r.q025[j], &r.q975[j]);
  }

  const RowMajor rows(prediction_design);
  const int nr = static_cast<int>(rows.rows());
  r.eta_mean.resize(nr);
  r.eta_sd.resize(nr);
  std::vector<std::pair<int, double>> row;
  for (int i = 0; i < nr; ++i) {
    row.clear();
    for (RowMajor::InnerIterator it(rows, i); it; ++it) row.emplace_back(static_cast<int>(it.col()), it.value());
    for (std::size_t g = 0; g < ng; ++g) {
      double mu = 0.0;
      for (auto [col, v] : row) mu += v * approxs[g].mode[col];
      m[g] = mu;
      s[g] = std::sqrt(approxs[g].covariance->row_variance(row));
    }
    summarize(m, s, r.eta_mean[i], r.eta_sd[i], nullptr, nullptr);
  }

  for (const auto& b : layout.blocks) {
    if (b.kind != BlockKind::Intercept && b.kind != BlockKind::Linear) continue;
    r.fixed.names.push_back(b.name);
    r.fixed.index.push_back(b.offset);
  }
  const int nf = static_cast<int>(r.fixed.index.size());
  r.fixed.covariance = Eigen::MatrixXd::Zero(nf, nf);
  Eigen::VectorXd fm = Eigen::VectorXd::Zero(nf);
  for (std::size_t g = 0; g < ng; ++g) {
    Eigen::VectorXd mg(nf);
    for (int a = 0; a < nf; ++a) mg[a] = approxs[g].mode[r.fixed.index[a]];
    Eigen::MatrixXd cg(nf, nf);
    for (int a = 0; a < nf; ++a)
      for (int b = 0; b < nf; ++b) cg(a, b) = (*approxs[g].covariance)(r.fixed.index[a], r.fixed.index[b]);
    r.fixed.covariance += w[g] * (cg + mg * mg.transpose());
    fm += w[g] * mg;
  }
  r.fixed.covariance -= fm * fm.transpose();
  return r;
}

PosteriorResult fit(const LatentLayout& layout, const FitData& data, const FitOptions& options) {
  Eigen::VectorXd init = options.init;
  if (init.size() == 0) init = Eigen::VectorXd::Constant(layout.n_hyper(), 2.0);
  const OptimizeResult opt = optimize_theta(layout, data, init, options.optimize);
  log::debug("theta_hat " + format_theta(opt.theta_hat) + " after " +
             std::to_string(opt.evaluations) + " evaluations");
  GridOptions gopts = options.grid;
  if (!gopts.hyperprior) gopts.hyperprior = options.optimize.hyperprior;
  const GridIntegration gi = integrate_theta(layout, data, opt, gopts);
  PosteriorResult r = latent_marginals(gi.grid, gi.approximations, layout, layout.design);
  r.theta_hat = opt.theta_hat;
  return r;
}

const char* to_string(Significance s) {
  switch (s) {
    case Significance::Positive: return "positive-significant";
    case Significance::Negative: return "negative-significant";
    case Significance::NotSignificant: return "not-significant";
  }
  return "?";
}

std::vector<Significance> lse_significance(const PosteriorResult& result, const LatentLayout& layout) {
  const auto* b = layout.besag_block();
  if (!b) throw ConfigError("model has no Besag effect");
  std::vector<Significance> out;
  out.reserve(b->length);
  for (int j = 0; j < b->length; ++j) {
    const int k = b->offset + j;
    if (result.q025[k] > 0)
      out.push_back(Significance::Positive);
    else if (result.q975[k] < 0)
      out.push_back(Significance::Negative);
    else
      out.push_back(Significance::NotSignificant);
  }
  return out;
}

}  // namespace lgcp
