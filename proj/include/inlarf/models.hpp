#pragma once

#include "inlarf/lgm.hpp"
#include "inlarf/mesh.hpp"
#include "inlarf/simulate.hpp"

#include <functional>
#include <memory>
#include <span>

namespace inlarf {

/// Bridges a dataset to a concrete latent model: builds the fitting spec on
/// a training subset and design rows for any subset, and exposes the hooks
/// the node-correction algorithm needs (which effect is correctable, which
/// node a row maps to, and feature builders for the residual learner).
struct StudyModel {
  std::function<LgmSpec(const StDataset&, std::span<const int>)> make_spec;
  std::function<Eigen::SparseMatrix<double>(const StDataset&, std::span<const int>)> make_design;
  /// covariates + time index + coordinates
  std::function<Eigen::MatrixXd(const StDataset&, std::span<const int>)> rf_features_full;
  /// time index (and coordinates for spatial models)
  std::function<Eigen::MatrixXd(const StDataset&, std::span<const int>)> rf_features_minimal;
  /// residual-learner features at target-effect nodes
  std::function<Eigen::MatrixXd(std::span<const int>)> target_node_features;
  std::function<int(const StRow&)> row_node;
  int target_effect = 0;
  bool spatial = false;
  FitOptions fit_options;
};

/// Spatio-temporal model: separable AR(1)-by-Matern interaction on a grid
/// mesh plus linear covariate effects (z1, z2 and the category dummies).
struct StModelConfig {
  int mesh_nx = 15;
  int mesh_ny = 15;
  double mesh_margin = 0.25;
  // zero extent means "use the data bounding box"
  double domain_x0 = 0.0, domain_x1 = 0.0;
  double domain_y0 = 0.0, domain_y1 = 0.0;
  double pc_rho0 = 0.0;  // 0 -> max boundary distance / 5
  double pc_sigma0 = 1.0;
  double a_prior_var = 0.15;
  double fixed_prec = 1e-3;
  double init_tau_obs = 1.0;
  double init_sigma = 1.0;
  double init_a = 0.0;
};

StudyModel make_st_model(const StDataset& data, const StModelConfig& cfg = {});

/// Purely temporal model: intercept plus a second-order random walk over
/// the time index.
struct TemporalModelConfig {
  double fixed_prec = 1e-3;
  double init_tau_obs = 1.0;
  double init_tau_rw2 = 1.0;
  /// grid integration makes the latent variances respond to the data
  /// (spikes at poorly determined stretches), which node selection needs
  bool integrate_hyper = true;
};

StudyModel make_temporal_model(const StDataset& data, const TemporalModelConfig& cfg = {});

}  // namespace inlarf
