#include "inlarf/forest.hpp"

#include "inlarf/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace inlarf {

double Tree::predict_row(const Eigen::MatrixXd& x, int row) const {
  int node = 0;
  while (!nodes[node].is_leaf())
    node = x(row, nodes[node].feature) <= nodes[node].threshold ? nodes[node].left
                                                                : nodes[node].right;
  return nodes[node].value;
}

std::optional<SplitChoice> best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      std::span<const int> rows, std::span<const int> features,
                                      int min_leaf) {
  const int n = static_cast<int>(rows.size());
  if (n < 2 * min_leaf) return std::nullopt;

  double sum = 0.0, sum2 = 0.0;
  for (int r : rows) {
    sum += y(r);
    sum2 += y(r) * y(r);
  }
  const double parent_sse = sum2 - sum * sum / n;
  if (parent_sse <= 0.0) return std::nullopt;

  std::optional<SplitChoice> best;
  std::vector<std::pair<double, double>> vals(n);  // (feature value, response)
  for (int f : features) {
    for (int i = 0; i < n; ++i) vals[i] = {x(rows[i], f), y(rows[i])};
    std::sort(vals.begin(), vals.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double left_sum = 0.0, left_sum2 = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
      left_sum += vals[i].second;
      left_sum2 += vals[i].second * vals[i].second;
      if (vals[i].first == vals[i + 1].first) continue;
      const int nl = i + 1, nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double right_sum = sum - left_sum;
      const double right_sum2 = sum2 - left_sum2;
      const double sse = (left_sum2 - left_sum * left_sum / nl) +
                         (right_sum2 - right_sum * right_sum / nr);
      if (!best || sse < best->children_sse) {
        best = SplitChoice{f, 0.5 * (vals[i].first + vals[i + 1].first), sse};
      }
    }
  }
  // require a genuine reduction of the parent SSE
  if (best && best->children_sse >= parent_sse * (1.0 - 1e-12)) return std::nullopt;
  return best;
}

namespace {

void grow_node(Tree& tree, int node_idx, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               std::vector<int>& rows, int begin, int end, int depth, const ForestConfig& cfg,
               int mtry, std::mt19937_64& rng) {
  const int n = end - begin;
  double mean = 0.0;
  for (int i = begin; i < end; ++i) mean += y(rows[i]);
  mean /= n;
  tree.nodes[node_idx].value = mean;

  if (n < 2 * cfg.min_leaf) return;
  if (cfg.max_depth > 0 && depth >= cfg.max_depth) return;

  const int p = static_cast<int>(x.cols());
  std::vector<int> all_features(p);
  std::iota(all_features.begin(), all_features.end(), 0);
  std::vector<int> chosen;
  chosen.reserve(mtry);
  std::sample(all_features.begin(), all_features.end(), std::back_inserter(chosen), mtry, rng);

  const auto split = best_split(x, y, std::span<const int>(rows.data() + begin, n), chosen,
                                cfg.min_leaf);
  if (!split) return;

  const auto mid_it =
      std::partition(rows.begin() + begin, rows.begin() + end,
                     [&](int r) { return x(r, split->feature) <= split->threshold; });
  const int mid = static_cast<int>(mid_it - rows.begin());
  if (mid == begin || mid == end) return;  // numerically degenerate partition

  const int left = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  const int right = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes[node_idx].feature = split->feature;
  tree.nodes[node_idx].threshold = split->threshold;
  tree.nodes[node_idx].left = left;
  tree.nodes[node_idx].right = right;
  grow_node(tree, left, x, y, rows, begin, mid, depth + 1, cfg, mtry, rng);
  grow_node(tree, right, x, y, rows, mid, end, depth + 1, cfg, mtry, rng);
}

struct GrownTree {
  Tree tree;
  std::vector<std::uint8_t> in_bag;
};

GrownTree grow_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& cfg,
                    int tree_index) {
  const int n = static_cast<int>(x.rows());
  auto rng = make_rng(cfg.seed + static_cast<std::uint64_t>(tree_index));

  GrownTree out;
  out.in_bag.assign(n, 0);
  std::vector<int> rows;
  rows.reserve(n);
  if (cfg.bootstrap) {
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int i = 0; i < n; ++i) {
      const int r = pick(rng);
      rows.push_back(r);
      out.in_bag[r] = 1;
    }
    std::sort(rows.begin(), rows.end());
  } else {
    rows.resize(n);
    std::iota(rows.begin(), rows.end(), 0);
    std::fill(out.in_bag.begin(), out.in_bag.end(), 1);
  }

  out.tree.nodes.emplace_back();
  grow_node(out.tree, 0, x, y, rows, 0, static_cast<int>(rows.size()), 0, cfg,
            cfg.resolved_mtry(static_cast<int>(x.cols())), rng);
  return out;
}

}  // namespace

ForestFit fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& cfg) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  if (n < 2) throw std::invalid_argument("fit_forest: need at least two rows");
  if (p < 1) throw std::invalid_argument("fit_forest: need at least one feature");
  if (y.size() != n) throw std::invalid_argument("fit_forest: y length mismatch");
  if (cfg.n_trees < 1) throw std::invalid_argument("fit_forest: need at least one tree");
  if (cfg.mtry > p) throw std::invalid_argument("fit_forest: mtry exceeds feature count");

  std::vector<GrownTree> grown(cfg.n_trees);
  const int n_threads = std::max(1, cfg.n_threads);
  if (n_threads == 1) {
    for (int b = 0; b < cfg.n_trees; ++b) grown[b] = grow_tree(x, y, cfg, b);
  } else {
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (int b = next.fetch_add(1); b < cfg.n_trees; b = next.fetch_add(1))
        grown[b] = grow_tree(x, y, cfg, b);
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ForestFit fit;
  fit.n_features = p;
  fit.trees.reserve(cfg.n_trees);

  Eigen::VectorXd oob_sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd all_sum = Eigen::VectorXd::Zero(n);
  std::vector<int> oob_cnt(n, 0);
  for (auto& g : grown) {
    for (int r = 0; r < n; ++r) {
      const double pred = g.tree.predict_row(x, r);
      all_sum(r) += pred;
      if (!g.in_bag[r]) {
        oob_sum(r) += pred;
        ++oob_cnt[r];
      }
    }
    fit.trees.push_back(std::move(g.tree));
  }

  fit.oob_pred.resize(n);
  fit.has_oob.assign(n, 0);
  double mse = 0.0;
  int n_scored = 0;
  for (int r = 0; r < n; ++r) {
    if (oob_cnt[r] > 0) {
      fit.oob_pred(r) = oob_sum(r) / oob_cnt[r];
      fit.has_oob[r] = 1;
      mse += (y(r) - fit.oob_pred(r)) * (y(r) - fit.oob_pred(r));
      ++n_scored;
    } else {
      fit.oob_pred(r) = all_sum(r) / cfg.n_trees;
    }
  }
  fit.oob_mse = n_scored > 0 ? mse / n_scored : 0.0;
  return fit;
}

Eigen::VectorXd predict(const ForestFit& fit, const Eigen::MatrixXd& x) {
  if (x.cols() != fit.n_features) throw std::invalid_argument("predict: feature count mismatch");
  const int n = static_cast<int>(x.rows());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (const auto& tree : fit.trees)
    for (int r = 0; r < n; ++r) out(r) += tree.predict_row(x, r);
  return out / static_cast<double>(fit.trees.size());
}

}  // namespace inlarf
