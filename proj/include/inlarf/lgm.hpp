#pragma once

#include "inlarf/gmrf.hpp"
#include "inlarf/sparse.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>
#include <string>
#include <vector>

namespace inlarf {

/// One latent block of an LGM: the effect structure plus the projector
/// rows that link it to the observations.
struct Effect {
  EffectSpec spec;
  Eigen::SparseMatrix<double> a_block;  // n_obs x spec.size()
};

struct LogGammaPrior {
  double shape = 1.0;
  double rate = 5e-5;
};

/// Declarative latent Gaussian model with Gaussian observations:
/// y = A x + offset + e, e_i ~ N(0, 1/tau + extra_obs_variance_i),
/// x ~ N(0, Q_prior(theta)^{-1}). Fixed-effect columns carry a vague
/// Gaussian prior with precision fixed_prec.
struct LgmSpec {
  std::vector<Effect> effects;
  Eigen::MatrixXd fixed_design;  // n_obs x p, may have zero columns
  double fixed_prec = 1e-3;
  Eigen::VectorXd offset;              // empty means zero
  Eigen::VectorXd extra_obs_variance;  // empty means zero

  double tau_obs = 1.0;
  bool tau_obs_free = true;
  LogGammaPrior tau_obs_prior;

  int n_obs() const;
  int latent_dim() const;
  int n_fixed() const { return static_cast<int>(fixed_design.cols()); }
  /// Start offset of effect k in the latent vector; fixed effects sit at the end.
  int effect_start(int k) const;
  int fixed_start() const;
  /// Full design [effect blocks..., fixed columns], n_obs x latent_dim.
  Eigen::SparseMatrix<double> design() const;

  Eigen::VectorXd offset_or_zero() const;
  Eigen::VectorXd extra_var_or_zero() const;
};

/// Hyperparameters are handled on an unconstrained internal scale:
/// log(tau), log(rho), log(sigma), and log((1+a)/(1-a)).
std::vector<std::string> hyper_names(const LgmSpec& spec);
Eigen::VectorXd initial_theta(const LgmSpec& spec);

/// Joint PC prior density for the Matern pair, with both tail probabilities
/// at one half: P(rho < rho0) = 0.5 and P(sigma > sigma0) = 0.5.
double pc_prior_matern_logdensity(double rho, double sigma, double rho0, double sigma0);

/// Sum of log prior densities evaluated on the internal scale (Jacobians
/// included where the prior is stated on the natural scale).
double log_prior(const LgmSpec& spec, const Eigen::VectorXd& theta);

struct ConditionalPosterior {
  Eigen::VectorXd mu;
  SparseSymMatrix q_post;
  std::shared_ptr<const CholeskyFactor> factor;
};

ConditionalPosterior conditional_posterior(const LgmSpec& spec, const Eigen::VectorXd& theta,
                                           const Eigen::VectorXd& y);

double log_marginal_likelihood(const LgmSpec& spec, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& y);

struct FitOptions {
  double nm_tol = 1e-6;
  int nm_max_iter = 500;
  double nm_step = 0.25;
  /// When set, variance summaries integrate over a small hyperparameter
  /// grid around the mode (mode +- grid_z curvature-scaled steps per axis)
  /// instead of plugging in the mode. Posterior means stay at the mode.
  bool integrate_hyper = false;
  double grid_z = 1.0;
};

struct OptimizeResult {
  Eigen::VectorXd theta_mode;
  double log_posterior = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead maximization of log marginal likelihood + log prior.
OptimizeResult optimize_hyper(const LgmSpec& spec, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& init, const FitOptions& opt = {});

struct HyperGridPoint {
  double weight = 1.0;
  Eigen::VectorXd mu;
  std::shared_ptr<const CholeskyFactor> factor;
  double tau_obs = 1.0;
};

struct LgmFit {
  Eigen::VectorXd theta_mode;
  std::vector<std::string> theta_names;
  Eigen::VectorXd mu;       // conditional posterior mean at the mode
  SparseSymMatrix q_post;   // conditional posterior precision at the mode
  std::shared_ptr<const CholeskyFactor> factor;
  Eigen::VectorXd latent_marginal_var;
  Eigen::VectorXd eta_mean, eta_var;    // linear predictor summaries
  Eigen::VectorXd pred_mean, pred_var;  // predictive (adds observation noise)
  double log_marginal = 0.0;
  double tau_obs_mode = 0.0;
  int nm_iterations = 0;
  int nm_evaluations = 0;
  std::vector<std::pair<int, int>> effect_ranges;  // (start, size) per effect
  int fixed_start = 0;
  int n_fixed = 0;
  /// Non-empty when the fit integrated over a hyperparameter grid; the
  /// variance summaries above then mix conditionals across these points.
  std::vector<HyperGridPoint> grid;
};

/// Empirical-Bayes fit: hyperparameter mode, then the exact Gaussian
/// conditional posterior and its summaries at that mode.
LgmFit fit(const LgmSpec& spec, const Eigen::VectorXd& y,
           const Eigen::VectorXd& init = Eigen::VectorXd(), const FitOptions& opt = {});

struct Prediction {
  Eigen::VectorXd eta_mean, eta_var;
  Eigen::VectorXd pred_mean, pred_var;
};

/// Linear-predictor and predictive summaries at new design rows (same
/// latent layout as the fitted spec).
Prediction predict(const LgmFit& fit, const Eigen::SparseMatrix<double>& a_new,
                   const Eigen::VectorXd& offset_new = Eigen::VectorXd(),
                   const Eigen::VectorXd& extra_var_new = Eigen::VectorXd());

}  // namespace inlarf
