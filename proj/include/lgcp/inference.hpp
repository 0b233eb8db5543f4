#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgcp/model.hpp"
#include "lgcp/sparse_cholesky.hpp"

namespace lgcp {

// Poisson observations y_i ~ Poisson(exp(eta_i)), eta = design * x.
struct FitData {
  SpMat design;
  Eigen::VectorXd counts;
  double log_factorial_sum = 0.0;  // sum_i log(y_i!)
};

FitData make_fit_data(const LatentLayout& layout, const PixelTable& table,
                      std::optional<std::span<const std::size_t>> rows = {});
FitData make_fit_data(SpMat design, const Eigen::VectorXd& counts);

struct NewtonOptions {
  double tolerance = 1e-8;  // max-norm of the projected score
  int max_iterations = 50;
  int max_halvings = 20;
};

// Covariance of the constrained Gaussian approximation:
// S = H^{-1} - W (C W)^{-1} W',  W = H^{-1} C', with H = Q* + C'C (same
// Gaussian on {Cx = 0}, but positive definite under confounded blocks).
class ConstrainedCovariance {
 public:
  ConstrainedCovariance() = default;
  ConstrainedCovariance(std::shared_ptr<const SparseCholesky> factor, const Eigen::MatrixXd& c);

  double operator()(int i, int j) const;
  Eigen::VectorXd marginal_variances() const;
  // Variance of r'x for a sparse row r.
  double row_variance(const std::vector<std::pair<int, double>>& row) const;

 private:
  double raw(int i, int j) const;

  std::shared_ptr<const SparseCholesky> factor_;
  SelectedInverse selected_;
  Eigen::MatrixXd w_;
  Eigen::MatrixXd cw_inv_;
};

struct GaussianApprox {
  Eigen::VectorXd theta;
  Eigen::VectorXd mode;
  SpMat precision;  // Q(theta) + A' diag(exp(A a)) A
  int iterations = 0;
  double gradient_norm = 0.0;

  double log_likelihood = 0.0;       // log pi(y | eta = A a), including -log y!
  double log_prior_latent = 0.0;     // log pi(x = a | theta) on the constraint subspace
  double log_gaussian_at_mode = 0.0;  // log pi_G(x = a | y, theta) on the same subspace

  // Set when marginals are requested.
  std::optional<ConstrainedCovariance> covariance;
  Eigen::VectorXd sd;
};

GaussianApprox gaussian_approximation(const LatentLayout& layout, const FitData& data,
                                      const Eigen::VectorXd& theta,
                                      const NewtonOptions& options = {},
                                      const Eigen::VectorXd* warm_start = nullptr,
                                      bool with_marginals = false);

using HyperPrior = std::function<double(const Eigen::VectorXd&)>;

struct ThetaEvaluation {
  double log_posterior = 0.0;
  double log_hyperprior = 0.0;
  GaussianApprox approx;
};

// Laplace approximation of log pi(theta | y) up to a theta-free constant:
// log pi(y|a) + log pi(a|theta) - log pi_G(a|y,theta) + log pi(theta).
// The default hyperprior is the layout's PC prior.
ThetaEvaluation log_posterior_theta(const LatentLayout& layout, const FitData& data,
                                    const Eigen::VectorXd& theta,
                                    const NewtonOptions& options = {},
                                    const Eigen::VectorXd* warm_start = nullptr,
                                    const HyperPrior& hyperprior = {});

struct OptimizeOptions {
  double initial_step = 1.0;
  double min_step = 0.01;
  double probe = 0.05;  // final local-optimality check radius
  int max_evaluations = 2000;
  NewtonOptions newton;
  HyperPrior hyperprior;
};

struct OptimizeResult {
  Eigen::VectorXd theta_hat;
  double log_posterior = 0.0;
  double initial_log_posterior = 0.0;
  int evaluations = 0;
  Eigen::VectorXd mode;  // latent mode at theta_hat
};

// Derivative-free pattern search on log pi(theta | y).
OptimizeResult optimize_theta(const LatentLayout& layout, const FitData& data,
                              const Eigen::VectorXd& init, const OptimizeOptions& options = {});

struct ThetaGrid {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> log_posterior;
  std::vector<double> weights;
};

struct GridIntegration {
  ThetaGrid grid;
  std::vector<GaussianApprox> approximations;  // with marginals, aligned with grid.points
};

struct GridOptions {
  double step = 0.5;
  int radius = 2;
  double cutoff = 6.0;
  int workers = 1;
  NewtonOptions newton;
  HyperPrior hyperprior;
};

GridIntegration integrate_theta(const LatentLayout& layout, const FitData& data,
                                const OptimizeResult& optimum, const GridOptions& options = {});

struct FixedEffectCovariance {
  std::vector<std::string> names;
  std::vector<int> index;  // latent coordinate of each name
  Eigen::MatrixXd covariance;
};

struct PosteriorResult {
  Eigen::VectorXd theta_hat;
  ThetaGrid grid;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  Eigen::VectorXd q025;
  Eigen::VectorXd q975;
  // Linear predictor summaries for every row of the prediction design.
  Eigen::VectorXd eta_mean;
  Eigen::VectorXd eta_sd;
  FixedEffectCovariance fixed;
};

// Gaussian-mixture summaries over the grid. Quantiles are found by bisection
// on the mixture CDF.
PosteriorResult latent_marginals(const ThetaGrid& grid, std::span<const GaussianApprox> approxs,
                                 const LatentLayout& layout, const SpMat& prediction_design);

double mixture_quantile(std::span<const double> weights, std::span<const double> means,
                        std::span<const double> sds, double p, double tol = 1e-6);

struct FitOptions {
  Eigen::VectorXd init;  // empty => 2.0 for every hyperparameter
  OptimizeOptions optimize;
  GridOptions grid;
};

// optimize_theta + integrate_theta + latent_marginals; predictions cover
// every row of layout.design.
PosteriorResult fit(const LatentLayout& layout, const FitData& data, const FitOptions& options = {});

enum class Significance { Positive, Negative, NotSignificant };
const char* to_string(Significance s);

std::vector<Significance> lse_significance(const PosteriorResult& result, const LatentLayout& layout);

}  // namespace lgcp
