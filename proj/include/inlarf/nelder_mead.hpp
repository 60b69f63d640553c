#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <limits>
#include <vector>

namespace inlarf {

struct NelderMeadResult {
  Eigen::VectorXd x;
  double fx = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free simplex maximization. Deterministic given the starting
/// point; stops when both the function spread and the vertex spread of the
/// simplex fall below tol, or after max_iter iterations.
inline NelderMeadResult nelder_mead_max(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& init, double step, double tol,
                                        int max_iter) {
  NelderMeadResult res;
  const int n = static_cast<int>(init.size());
  if (n == 0) {
    res.x = init;
    res.fx = f(init);
    res.evaluations = 1;
    res.converged = true;
    return res;
  }

  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };

  std::vector<Eigen::VectorXd> xs(n + 1, init);
  std::vector<double> fs(n + 1);
  for (int i = 1; i <= n; ++i) xs[i](i - 1) += step;
  for (int i = 0; i <= n; ++i) fs[i] = eval(xs[i]);

  std::vector<int> ord(n + 1);
  auto sort_simplex = [&]() {
    for (int i = 0; i <= n; ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](int a, int b) { return fs[a] > fs[b]; });
    std::vector<Eigen::VectorXd> xs2(n + 1);
    std::vector<double> fs2(n + 1);
    for (int i = 0; i <= n; ++i) {
      xs2[i] = xs[ord[i]];
      fs2[i] = fs[ord[i]];
    }
    xs.swap(xs2);
    fs.swap(fs2);
  };

  int iter = 0;
  for (; iter < max_iter; ++iter) {
    sort_simplex();
    double vert_spread = 0.0;
    for (int i = 1; i <= n; ++i)
      vert_spread = std::max(vert_spread, (xs[i] - xs[0]).lpNorm<Eigen::Infinity>());
    const double f_spread = std::isfinite(fs[n]) ? fs[0] - fs[n]
                                                 : std::numeric_limits<double>::infinity();
    if (f_spread < tol && vert_spread < tol) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += xs[i];
    centroid /= n;

    const Eigen::VectorXd xr = centroid + (centroid - xs[n]);  // reflection
    const double fr = eval(xr);
    if (fr > fs[0]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - xs[n]);  // expansion
      const double fe = eval(xe);
      if (fe > fr) {
        xs[n] = xe;
        fs[n] = fe;
      } else {
        xs[n] = xr;
        fs[n] = fr;
      }
      continue;
    }
    if (fr > fs[n - 1]) {
      xs[n] = xr;
      fs[n] = fr;
      continue;
    }
    const Eigen::VectorXd xc = centroid + 0.5 * (xs[n] - centroid);  // contraction
    const double fc = eval(xc);
    if (fc > fs[n]) {
      xs[n] = xc;
      fs[n] = fc;
      continue;
    }
    for (int i = 1; i <= n; ++i) {  // shrink
      xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
      fs[i] = eval(xs[i]);
    }
  }
  sort_simplex();
  res.x = xs[0];
  res.fx = fs[0];
  res.iterations = iter;
  res.evaluations = evals;
  return res;
}

}  // namespace inlarf
