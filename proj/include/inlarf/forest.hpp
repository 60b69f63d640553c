#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace inlarf {

struct ForestConfig {
  int n_trees = 500;
  int mtry = 0;  // 0 -> max(1, p / 3)
  int min_leaf = 5;
  int max_depth = 0;  // 0 -> unlimited
  std::uint64_t seed = 0;
  bool bootstrap = true;
  int n_threads = 1;

  int resolved_mtry(int p) const { return mtry > 0 ? mtry : std::max(1, p / 3); }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict_row(const Eigen::MatrixXd& x, int row) const;
  bool operator==(const Tree&) const = default;
};

struct ForestFit {
  std::vector<Tree> trees;
  Eigen::VectorXd oob_pred;  // rows never out of bag carry the ensemble prediction
  std::vector<std::uint8_t> has_oob;
  double oob_mse = 0.0;
  int n_features = 0;

  bool operator==(const ForestFit& other) const {
    return trees == other.trees && oob_pred == other.oob_pred && has_oob == other.has_oob &&
           oob_mse == other.oob_mse && n_features == other.n_features;
  }
};

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double children_sse = 0.0;
};

/// Best axis-aligned split over the given rows and candidate features:
/// minimizes the summed child SSE with thresholds at midpoints between
/// consecutive distinct values; ties go to the lowest feature index, then
/// the lowest threshold. Empty result when nothing reduces the parent SSE
/// or respects min_leaf.
std::optional<SplitChoice> best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      std::span<const int> rows, std::span<const int> features,
                                      int min_leaf);

/// CART regression forest on bootstrap resamples; tree b draws its own RNG
/// stream from seed + b, so parallel fitting is identical to serial.
ForestFit fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& cfg);

Eigen::VectorXd predict(const ForestFit& fit, const Eigen::MatrixXd& x);

}  // namespace inlarf
