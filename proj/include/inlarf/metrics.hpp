#pragma once

#include "inlarf/simulate.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace inlarf {

/// Predictive scores over one evaluation set: root mean squared error,
/// mean absolute error, 95% interval coverage, and average interval width.
struct MetricReport {
  double rmse = 0.0;
  double mae = 0.0;
  double cp = 0.0;
  double aiw = 0.0;
};

constexpr double interval_z = 1.959963984540054;  // 0.975 Gaussian quantile

MetricReport evaluate(std::span<const double> y, std::span<const double> pred_mean,
                      std::span<const double> pred_sd);
MetricReport evaluate(const Eigen::VectorXd& y, const Eigen::VectorXd& pred_mean,
                      const Eigen::VectorXd& pred_sd);

/// Lloyd's algorithm with distance-weighted seeding; deterministic given seed.
std::vector<int> kmeans(std::span<const Eigen::Vector2d> points, int k, std::uint64_t seed);

struct BlockAssignment {
  std::vector<int> block;  // per-row block id in 1..n_blocks
  int n_blocks = 0;
};

/// Spatio-temporal blocks: rows of each temporal group are clustered
/// spatially; block id combines group and cluster.
BlockAssignment st_blocks(const StDataset& data,
                          const std::vector<std::vector<int>>& temporal_groups, int k_spatial,
                          std::uint64_t seed);

/// Contiguous equal split of 1..t_len into n_groups.
std::vector<std::vector<int>> contiguous_temporal_groups(int t_len, int n_groups);

struct CvFoldReport {
  int block = 0;
  MetricReport train;
  MetricReport test;
};

struct CvReport {
  std::vector<CvFoldReport> folds;
  MetricReport mean_train;
  MetricReport mean_test;
};

/// Model runner: fits on the train rows and returns predictive (mean, sd)
/// for every dataset row.
using ModelRunner = std::function<std::pair<Eigen::VectorXd, Eigen::VectorXd>(
    std::span<const int> train_rows, std::span<const int> test_rows)>;

/// Leave-one-block-out cross-validation; each block serves as the test set
/// once and metrics are reported per fold plus their arithmetic mean.
CvReport cv_run(const StDataset& data, const BlockAssignment& blocks, const ModelRunner& runner);

struct MetricCsvRow {
  std::string block_id;
  std::string split;
  MetricReport metrics;
};

void write_metric_csv(std::span<const MetricCsvRow> rows, std::ostream& os);

}  // namespace inlarf
