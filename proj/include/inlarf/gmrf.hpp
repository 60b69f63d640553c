#pragma once

#include "inlarf/mesh.hpp"
#include "inlarf/sparse.hpp"

#include <memory>

namespace inlarf {

/// Precision of the SPDE representation of a Matern field (alpha = 2,
/// i.e. nu = 1 in 2D): Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^{-1} G)
/// with kappa = sqrt(8)/rho and tau = 1/(2 sqrt(pi) kappa sigma).
SparseSymMatrix spde_matern_precision(const FemMatrices& fem, double rho, double sigma);

/// Tridiagonal precision of a stationary AR(1) of length t_len with
/// correlation a and innovation standard deviation sigma_innov.
SparseSymMatrix ar1_precision(int t_len, double a, double sigma_innov);

/// Random-walk precisions are intrinsic; a diagonal jitter makes them
/// factorizable and is reported alongside the matrix.
struct IntrinsicPrecision {
  SparseSymMatrix q;
  double jitter = 0.0;
};

constexpr double default_rw_jitter = 1e-5;

IntrinsicPrecision rw1_precision(int n, double tau, double jitter = default_rw_jitter);
IntrinsicPrecision rw2_precision(int n, double tau, double jitter = default_rw_jitter);

SparseSymMatrix iid_precision(int n, double tau);

/// kron(AR1(t_len, a, 1), Q_space): AR(1) temporal dynamics with spatially
/// correlated innovations; latent index = t * dim(Q_space) + g.
SparseSymMatrix st_separable_precision(const SparseSymMatrix& q_space, double a, int t_len);

/// Matern covariance with nu = 1: sigma2 * (kappa h) K_1(kappa h),
/// kappa = sqrt(8)/rho; equals sigma2 at h = 0 by continuity.
double matern_covariance(double h, double sigma2, double rho);

enum class EffectFamily { SpdeMatern, Ar1, Rw1, Rw2, Iid, SeparableSt };

/// One random-effect term of a latent model: family, size, current
/// hyperparameter values, and which of them are free (optimized).
struct EffectSpec {
  EffectFamily family = EffectFamily::Iid;

  double rho = 1.0;    // SpdeMatern / SeparableSt spatial range
  double sigma = 1.0;  // SpdeMatern / SeparableSt marginal sd; Ar1 innovation sd
  double a = 0.0;      // Ar1 / SeparableSt temporal correlation
  double tau = 1.0;    // Rw1 / Rw2 / Iid precision
  double jitter = default_rw_jitter;

  std::shared_ptr<const FemMatrices> fem;  // SpdeMatern / SeparableSt
  int t_len = 1;                           // Ar1 / SeparableSt
  int n = 0;                               // Rw1 / Rw2 / Iid

  bool rho_sigma_free = false;  // 2 hypers: log rho, log sigma (joint PC prior)
  bool a_free = false;          // 1 hyper: log((1+a)/(1-a)), Gaussian prior
  bool tau_free = false;        // 1 hyper: log tau, log-gamma prior

  double pc_rho0 = 1.0;  // P(rho < rho0) = 0.5
  double pc_sigma0 = 1.0;  // P(sigma > sigma0) = 0.5
  double a_prior_mean = 0.0;
  double a_prior_var = 0.15;
  double tau_prior_shape = 1.0;
  double tau_prior_rate = 5e-5;

  int size() const;
};

SparseSymMatrix effect_precision(const EffectSpec& spec);

/// log|Q| of the effect precision; the separable family uses the
/// Kronecker determinant identity instead of a full factorization.
double effect_log_det(const EffectSpec& spec);

}  // namespace inlarf
