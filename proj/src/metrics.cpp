#include "inlarf/metrics.hpp"

#include "inlarf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace inlarf {

MetricReport evaluate(std::span<const double> y, std::span<const double> pred_mean,
                      std::span<const double> pred_sd) {
  const size_t n = y.size();
  if (pred_mean.size() != n || pred_sd.size() != n)
    throw std::invalid_argument("evaluate: length mismatch");
  if (n == 0) throw std::invalid_argument("evaluate: empty input");
  MetricReport r;
  for (size_t i = 0; i < n; ++i) {
    const double err = y[i] - pred_mean[i];
    r.rmse += err * err;
    r.mae += std::abs(err);
    const double half = interval_z * pred_sd[i];
    if (y[i] >= pred_mean[i] - half && y[i] <= pred_mean[i] + half) r.cp += 1.0;
    r.aiw += 2.0 * half;
  }
  r.rmse = std::sqrt(r.rmse / n);
  r.mae /= n;
  r.cp /= n;
  r.aiw /= n;
  return r;
}

MetricReport evaluate(const Eigen::VectorXd& y, const Eigen::VectorXd& pred_mean,
                      const Eigen::VectorXd& pred_sd) {
  return evaluate(std::span<const double>(y.data(), y.size()),
                  std::span<const double>(pred_mean.data(), pred_mean.size()),
                  std::span<const double>(pred_sd.data(), pred_sd.size()));
}

std::vector<int> kmeans(std::span<const Eigen::Vector2d> points, int k, std::uint64_t seed) {
  const int n = static_cast<int>(points.size());
  if (k < 1) throw std::invalid_argument("kmeans: k must be positive");
  std::vector<Eigen::Vector2d> distinct;
  for (const auto& p : points)
    if (std::none_of(distinct.begin(), distinct.end(),
                     [&](const Eigen::Vector2d& q) { return (p - q).norm() == 0.0; }))
      distinct.push_back(p);
  if (k > static_cast<int>(distinct.size()))
    throw std::invalid_argument("kmeans: k exceeds the number of distinct points");

  auto rng = make_rng(seed);
  std::vector<Eigen::Vector2d> centroids;
  centroids.reserve(k);
  {  // distance-squared weighted seeding
    std::uniform_int_distribution<int> first(0, n - 1);
    centroids.push_back(points[first(rng)]);
    std::vector<double> d2(n);
    while (static_cast<int>(centroids.size()) < k) {
      for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : centroids) best = std::min(best, (points[i] - c).squaredNorm());
        d2[i] = best;
      }
      std::discrete_distribution<int> pick(d2.begin(), d2.end());
      centroids.push_back(points[pick(rng)]);
    }
  }

  std::vector<int> label(n, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (points[i] - centroids[0]).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (points[i] - centroids[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (label[i] != best) {
        label[i] = best;
        changed = true;
      }
    }
    if (!changed) break;

    std::vector<Eigen::Vector2d> sums(k, Eigen::Vector2d::Zero());
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums[label[i]] += points[i];
      ++counts[label[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centroids[c] = sums[c] / counts[c];
        continue;
      }
      // an emptied cluster restarts at the point farthest from its centroid
      int far = 0;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        const double d = (points[i] - centroids[label[i]]).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centroids[c] = points[far];
    }
  }
  return label;
}

std::vector<std::vector<int>> contiguous_temporal_groups(int t_len, int n_groups) {
  if (n_groups < 1 || n_groups > t_len)
    throw std::invalid_argument("contiguous_temporal_groups: bad group count");
  std::vector<std::vector<int>> groups(n_groups);
  for (int t = 1; t <= t_len; ++t) {
    const int g = std::min(n_groups - 1, (t - 1) * n_groups / t_len);
    groups[g].push_back(t);
  }
  return groups;
}

BlockAssignment st_blocks(const StDataset& data,
                          const std::vector<std::vector<int>>& temporal_groups, int k_spatial,
                          std::uint64_t seed) {
  std::vector<int> group_of_time(data.t_len + 1, -1);
  for (size_t g = 0; g < temporal_groups.size(); ++g)
    for (int t : temporal_groups[g]) {
      if (t < 1 || t > data.t_len || group_of_time[t] != -1)
        throw std::invalid_argument("st_blocks: groups must partition 1..T");
      group_of_time[t] = static_cast<int>(g);
    }
  for (int t = 1; t <= data.t_len; ++t)
    if (group_of_time[t] == -1) throw std::invalid_argument("st_blocks: time point not covered");

  BlockAssignment out;
  out.block.assign(data.n(), 0);
  out.n_blocks = static_cast<int>(temporal_groups.size()) * k_spatial;
  for (size_t g = 0; g < temporal_groups.size(); ++g) {
    std::vector<int> rows;
    std::vector<Eigen::Vector2d> pts;
    for (int i = 0; i < data.n(); ++i)
      if (group_of_time[data.rows[i].t] == static_cast<int>(g)) {
        rows.push_back(i);
        pts.emplace_back(data.rows[i].x, data.rows[i].y);
      }
    const auto labels = kmeans(pts, k_spatial, seed + g);
    for (size_t i = 0; i < rows.size(); ++i)
      out.block[rows[i]] = static_cast<int>(g) * k_spatial + labels[i] + 1;
  }
  return out;
}

CvReport cv_run(const StDataset& data, const BlockAssignment& blocks, const ModelRunner& runner) {
  if (blocks.n_blocks < 2) throw std::invalid_argument("cv_run: need at least two blocks");
  if (static_cast<int>(blocks.block.size()) != data.n())
    throw std::invalid_argument("cv_run: assignment size mismatch");

  CvReport report;
  for (int b = 1; b <= blocks.n_blocks; ++b) {
    std::vector<int> train, test;
    for (int i = 0; i < data.n(); ++i)
      (blocks.block[i] == b ? test : train).push_back(i);
    if (test.empty()) throw std::invalid_argument("cv_run: empty block " + std::to_string(b));
    if (train.empty()) throw std::invalid_argument("cv_run: empty training set");

    const auto [pred_mean, pred_sd] = runner(train, test);
    auto slice_eval = [&](const std::vector<int>& rows) {
      Eigen::VectorXd y(rows.size()), m(rows.size()), s(rows.size());
      for (size_t i = 0; i < rows.size(); ++i) {
        y(i) = data.rows[rows[i]].response;
        m(i) = pred_mean(rows[i]);
        s(i) = pred_sd(rows[i]);
      }
      return evaluate(y, m, s);
    };
    report.folds.push_back({b, slice_eval(train), slice_eval(test)});
  }

  auto mean_of = [&](auto pick) {
    MetricReport m;
    for (const auto& f : report.folds) {
      const MetricReport& r = pick(f);
      m.rmse += r.rmse;
      m.mae += r.mae;
      m.cp += r.cp;
      m.aiw += r.aiw;
    }
    const double nb = static_cast<double>(report.folds.size());
    m.rmse /= nb;
    m.mae /= nb;
    m.cp /= nb;
    m.aiw /= nb;
    return m;
  };
  report.mean_train = mean_of([](const CvFoldReport& f) -> const MetricReport& { return f.train; });
  report.mean_test = mean_of([](const CvFoldReport& f) -> const MetricReport& { return f.test; });
  return report;
}

void write_metric_csv(std::span<const MetricCsvRow> rows, std::ostream& os) {
  os.precision(10);
  os << "block_id,split,rmse,mae,cp,aiw\n";
  for (const auto& r : rows)
    os << r.block_id << "," << r.split << "," << r.metrics.rmse << "," << r.metrics.mae << ","
       << r.metrics.cp << "," << r.metrics.aiw << "\n";
}

}  // namespace inlarf
