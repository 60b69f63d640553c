#include "inlarf/kld.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace inlarf {

double kld_gaussian_uv(double m0, double v0, double m1, double v1) {
  if (v0 <= 0.0 || v1 <= 0.0) throw std::invalid_argument("kld_gaussian_uv: variances must be positive");
  const double d = m1 - m0;
  return std::max(0.0, 0.5 * (std::log(v1 / v0) + v0 / v1 + d * d / v1 - 1.0));
}

double kld_gaussian_mv(const Eigen::VectorXd& mu0, const CholeskyFactor& f0,
                       const Eigen::VectorXd& mu1, const SparseSymMatrix& q1,
                       const CholeskyFactor& f1) {
  const int j = static_cast<int>(mu0.size());
  if (mu1.size() != j || f0.dim() != j || q1.dim() != j)
    throw std::invalid_argument("kld_gaussian_mv: dimension mismatch");

  const Eigen::SparseMatrix<double> q1_full = q1.full();
  const Eigen::VectorXd d = mu1 - mu0;
  const double quad = d.dot(q1_full * d);

  double trace = 0.0;
  Eigen::VectorXd e = Eigen::VectorXd::Zero(j);
  for (int c = 0; c < j; ++c) {
    e(c) = 1.0;
    const Eigen::VectorXd u = f0.solve(e);  // column c of Q0^{-1}
    trace += q1_full.col(c).dot(u);
    e(c) = 0.0;
  }

  const double log_ratio = f1.log_det() - f0.log_det();
  return std::max(0.0, 0.5 * (quad + trace - j - log_ratio));
}

double kld_gaussian_mv(const Eigen::VectorXd& mu0, const SparseSymMatrix& q0,
                       const Eigen::VectorXd& mu1, const SparseSymMatrix& q1) {
  const CholeskyFactor f0(q0);
  const CholeskyFactor f1(q1);
  return kld_gaussian_mv(mu0, f0, mu1, q1, f1);
}

double kld_marginal_avg(const Eigen::VectorXd& mu0, const Eigen::VectorXd& var0,
                        const Eigen::VectorXd& mu1, const Eigen::VectorXd& var1) {
  const int j = static_cast<int>(mu0.size());
  if (var0.size() != j || mu1.size() != j || var1.size() != j)
    throw std::invalid_argument("kld_marginal_avg: dimension mismatch");
  double acc = 0.0;
  for (int i = 0; i < j; ++i) acc += kld_gaussian_uv(mu0(i), var0(i), mu1(i), var1(i));
  return acc / j;
}

double kld_marginal_max(const Eigen::VectorXd& mu0, const Eigen::VectorXd& var0,
                        const Eigen::VectorXd& mu1, const Eigen::VectorXd& var1,
                        std::span<const int> subset) {
  const int j = static_cast<int>(mu0.size());
  if (var0.size() != j || mu1.size() != j || var1.size() != j)
    throw std::invalid_argument("kld_marginal_max: dimension mismatch");
  double best = 0.0;
  if (subset.empty()) {
    for (int i = 0; i < j; ++i)
      best = std::max(best, kld_gaussian_uv(mu0(i), var0(i), mu1(i), var1(i)));
  } else {
    for (int i : subset) {
      if (i < 0 || i >= j) throw std::invalid_argument("kld_marginal_max: subset index out of range");
      best = std::max(best, kld_gaussian_uv(mu0(i), var0(i), mu1(i), var1(i)));
    }
  }
  return best;
}

GaussianMarginal marginalize_block(const Eigen::VectorXd& mu, const SparseSymMatrix& q,
                                   int drop_start, int drop_len) {
  const int j = q.dim();
  if (drop_start < 0 || drop_len < 0 || drop_start + drop_len > j)
    throw std::invalid_argument("marginalize_block: bad block");
  if (drop_len == 0) return {mu, q};
  const int keep = j - drop_len;

  auto keep_index = [&](int i) { return i < drop_start ? i : i - drop_len; };
  auto is_dropped = [&](int i) { return i >= drop_start && i < drop_start + drop_len; };

  // partition Q into kept/dropped blocks
  std::vector<Triplet> q_aa;
  Eigen::MatrixXd q_bb = Eigen::MatrixXd::Zero(drop_len, drop_len);
  std::vector<Eigen::Triplet<double>> q_ab_tr;  // keep x drop
  for (const auto& t : q.entries()) {
    const bool rd = is_dropped(t.row), cd = is_dropped(t.col);
    if (!rd && !cd) {
      q_aa.push_back({keep_index(t.row), keep_index(t.col), t.value});
    } else if (rd && cd) {
      q_bb(t.row - drop_start, t.col - drop_start) = t.value;
      if (t.row != t.col) q_bb(t.col - drop_start, t.row - drop_start) = t.value;
    } else {
      const int kr = rd ? t.col : t.row;
      const int dc = rd ? t.row : t.col;
      q_ab_tr.emplace_back(keep_index(kr), dc - drop_start, t.value);
    }
  }

  Eigen::SparseMatrix<double> q_ab(keep, drop_len);
  q_ab.setFromTriplets(q_ab_tr.begin(), q_ab_tr.end());

  const Eigen::LLT<Eigen::MatrixXd> llt(q_bb);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("marginalize_block: dropped block not positive definite");

  // S = Q_aa - Q_ab Q_bb^{-1} Q_ab^T, restricted to the rows that touch the block
  const Eigen::MatrixXd m = Eigen::MatrixXd(q_ab);
  const Eigen::MatrixXd correction = m * llt.solve(m.transpose());
  std::vector<int> touched;
  for (int r = 0; r < keep; ++r)
    if (correction.row(r).cwiseAbs().maxCoeff() > 0.0) touched.push_back(r);

  std::vector<Triplet> s_tr = q_aa;
  for (int ri = 0; ri < static_cast<int>(touched.size()); ++ri)
    for (int ci = 0; ci <= ri; ++ci) {
      const double v = correction(touched[ri], touched[ci]);
      if (v != 0.0) s_tr.push_back({touched[ri], touched[ci], -v});
    }

  GaussianMarginal out;
  out.q = SparseSymMatrix::from_triplets(s_tr, keep);
  out.mu.resize(keep);
  for (int i = 0; i < drop_start; ++i) out.mu(i) = mu(i);
  for (int i = drop_start + drop_len; i < j; ++i) out.mu(i - drop_len) = mu(i);
  return out;
}

}  // namespace inlarf
