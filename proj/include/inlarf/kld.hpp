#pragma once

#include "inlarf/sparse.hpp"

#include <Eigen/Dense>

#include <span>

namespace inlarf {

/// KLD(N(m0, v0) || N(m1, v1)) between univariate Gaussians.
double kld_gaussian_uv(double m0, double v0, double m1, double v1);

/// KLD between multivariate Gaussians given by mean and precision,
/// 0.5 [ (mu1-mu0)^T Q1 (mu1-mu0) + tr(Q1 Q0^{-1}) - J - log(|Q1|/|Q0|) ],
/// with the trace computed through per-column solves against Q0.
double kld_gaussian_mv(const Eigen::VectorXd& mu0, const SparseSymMatrix& q0,
                       const Eigen::VectorXd& mu1, const SparseSymMatrix& q1);
double kld_gaussian_mv(const Eigen::VectorXd& mu0, const CholeskyFactor& f0,
                       const Eigen::VectorXd& mu1, const SparseSymMatrix& q1,
                       const CholeskyFactor& f1);

/// Mean univariate KLD across latent nodes.
double kld_marginal_avg(const Eigen::VectorXd& mu0, const Eigen::VectorXd& var0,
                        const Eigen::VectorXd& mu1, const Eigen::VectorXd& var1);

/// Maximum univariate KLD over a node subset (all nodes when empty).
double kld_marginal_max(const Eigen::VectorXd& mu0, const Eigen::VectorXd& var0,
                        const Eigen::VectorXd& mu1, const Eigen::VectorXd& var1,
                        std::span<const int> subset = {});

/// Gaussian marginal of the kept coordinates: drops a contiguous block
/// [drop_start, drop_start + drop_len) via the precision Schur complement.
struct GaussianMarginal {
  Eigen::VectorXd mu;
  SparseSymMatrix q;
};

GaussianMarginal marginalize_block(const Eigen::VectorXd& mu, const SparseSymMatrix& q,
                                   int drop_start, int drop_len);

}  // namespace inlarf
