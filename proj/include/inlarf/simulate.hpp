#pragma once

#include "inlarf/sparse.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace inlarf {

enum class Split { Train, Test };

struct StRow {
  double x = 0.0;
  double y = 0.0;
  int t = 1;  // 1-based time index
  double response = 0.0;
  double z1 = 0.0;
  double z2 = 0.0;
  int cat = 1;  // category in {1,2,3}
  Split split = Split::Train;
  double eta_true = 0.0;
};

struct StDataset {
  std::vector<StRow> rows;
  int t_len = 1;

  int n() const { return static_cast<int>(rows.size()); }
  std::vector<int> train_indices() const;
  std::vector<int> test_indices() const;
  std::vector<int> all_indices() const;
};

/// Draws x with Cov(x) = Q^{-1} by back-substitution through the Cholesky
/// factor of Q.
Eigen::VectorXd sample_gmrf(const SparseSymMatrix& q, std::uint64_t seed);
Eigen::VectorXd sample_gmrf(const CholeskyFactor& factor, std::mt19937_64& rng);

/// Spatio-temporal study: nonlinear covariate effects plus an AR(1)-in-time
/// field with Matern-correlated innovations, locations redrawn per time point.
struct StSimConfig {
  int n_per_time = 150;
  int t_len = 8;
  double gamma1 = 0.727;
  double gamma2 = -1.027;
  double gamma3 = 0.3;
  double sigma2_spatial = 1.0;
  double rho = 3.627;  // half the maximum distance across the domain
  double sigma2_eps = 1.0 / 50.0;
  double a = 0.7;
  double domain_side = 0.0;  // 0 -> diagonal 7.254, i.e. side 7.254/sqrt(2)
  double train_fraction = 0.8;
  bool linear_signal = false;  // replace f1, f2 by linear terms (null-signal harness)
  double linear_b1 = 1.0;
  double linear_b2 = -1.0;

  double side() const;
  double domain_diagonal() const;
};

StDataset simulate_spatiotemporal(const StSimConfig& cfg, std::uint64_t seed);

/// Purely temporal study: intercept plus k signed jumps on a cumulative
/// design plus a first-order random walk, observed with Gaussian noise.
struct TemporalSimConfig {
  int n = 2000;
  int k_jumps = 10;
  int segment = 181;  // rows per jump segment; the last segment absorbs the remainder
  double beta0 = 2.0;
  double pi_s = 0.5;
  double mu_wj = 5.0;
  double tau_l = 20.0;
  double tau_wj = 10.0;
  double tau_ur = 20.0;
};

StDataset simulate_temporal_jumps(const TemporalSimConfig& cfg, std::uint64_t seed);

/// Cumulative jump design: column j is 1 from row segment*(j+1) on.
Eigen::MatrixXd jump_design(int n, int k, int segment);

/// Dense Matern covariance over a point set (validation and simulation only).
Eigen::MatrixXd dense_matern_covariance(const std::vector<Eigen::Vector2d>& pts, double sigma2,
                                        double rho);

void write_dataset_csv(const StDataset& ds, std::ostream& os);
StDataset read_dataset_csv(std::istream& is);
void write_dataset_csv_file(const StDataset& ds, const std::string& path);
StDataset read_dataset_csv_file(const std::string& path);

}  // namespace inlarf
