#include "inlarf/gmrf.hpp"

#include <cmath>
#include <numbers>

namespace inlarf {

SparseSymMatrix spde_matern_precision(const FemMatrices& fem, double rho, double sigma) {
  if (rho <= 0.0 || sigma <= 0.0)
    throw std::invalid_argument("spde_matern_precision: rho and sigma must be positive");
  const double kappa = std::sqrt(8.0) / rho;
  const double tau = 1.0 / (2.0 * std::sqrt(std::numbers::pi) * kappa * sigma);
  const double t2 = tau * tau;

  const Eigen::SparseMatrix<double> g = fem.g.full();
  Eigen::SparseMatrix<double> c_inv_g = g;
  for (int k = 0; k < c_inv_g.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(c_inv_g, k); it; ++it)
      it.valueRef() /= fem.c_diag(it.row());
  Eigen::SparseMatrix<double> q = (g * c_inv_g).eval();
  q += (2.0 * kappa * kappa) * g;
  Eigen::SparseMatrix<double> c4(g.rows(), g.cols());
  c4.setIdentity();
  for (int i = 0; i < c4.rows(); ++i) c4.coeffRef(i, i) = std::pow(kappa, 4) * fem.c_diag(i);
  q += c4;
  q *= t2;
  return SparseSymMatrix::from_eigen(q);
}

SparseSymMatrix ar1_precision(int t_len, double a, double sigma_innov) {
  if (t_len < 2) throw std::invalid_argument("ar1_precision: need t_len >= 2");
  if (std::abs(a) >= 1.0) throw std::invalid_argument("ar1_precision: need |a| < 1");
  if (sigma_innov <= 0.0) throw std::invalid_argument("ar1_precision: sigma_innov must be positive");
  const double s = 1.0 / (sigma_innov * sigma_innov);
  std::vector<Triplet> tr;
  tr.reserve(2 * t_len);
  for (int i = 0; i < t_len; ++i) {
    const double d = (i == 0 || i == t_len - 1) ? 1.0 : 1.0 + a * a;
    tr.push_back({i, i, s * d});
    if (i > 0) tr.push_back({i, i - 1, -s * a});
  }
  return SparseSymMatrix::from_triplets(tr, t_len);
}

namespace {

SparseSymMatrix difference_gram(int n, int order, double tau, double jitter) {
  // Q = tau * D^T D for the first/second difference operator D
  std::vector<Triplet> tr;
  const int rows = n - order;
  for (int r = 0; r < rows; ++r) {
    // difference stencil: order 1 -> (-1, 1); order 2 -> (1, -2, 1)
    double st[3] = {0, 0, 0};
    if (order == 1) {
      st[0] = -1;
      st[1] = 1;
    } else {
      st[0] = 1;
      st[1] = -2;
      st[2] = 1;
    }
    for (int a = 0; a <= order; ++a)
      for (int b = 0; b <= a; ++b) tr.push_back({r + a, r + b, tau * st[a] * st[b]});
  }
  if (jitter > 0.0)
    for (int i = 0; i < n; ++i) tr.push_back({i, i, jitter});
  return SparseSymMatrix::from_triplets(tr, n);
}

}  // namespace

IntrinsicPrecision rw1_precision(int n, double tau, double jitter) {
  if (n < 3) throw std::invalid_argument("rw1_precision: need n >= 3");
  if (tau <= 0.0) throw std::invalid_argument("rw1_precision: tau must be positive");
  return {difference_gram(n, 1, tau, jitter), jitter};
}

IntrinsicPrecision rw2_precision(int n, double tau, double jitter) {
  if (n < 4) throw std::invalid_argument("rw2_precision: need n >= 4");
  if (tau <= 0.0) throw std::invalid_argument("rw2_precision: tau must be positive");
  return {difference_gram(n, 2, tau, jitter), jitter};
}

SparseSymMatrix iid_precision(int n, double tau) {
  if (n < 1) throw std::invalid_argument("iid_precision: need n >= 1");
  if (tau <= 0.0) throw std::invalid_argument("iid_precision: tau must be positive");
  std::vector<Triplet> tr;
  tr.reserve(n);
  for (int i = 0; i < n; ++i) tr.push_back({i, i, tau});
  return SparseSymMatrix::from_triplets(tr, n);
}

SparseSymMatrix st_separable_precision(const SparseSymMatrix& q_space, double a, int t_len) {
  if (t_len == 1) return q_space;
  return kron(ar1_precision(t_len, a, 1.0), q_space);
}

double matern_covariance(double h, double sigma2, double rho) {
  if (h < 0.0) throw std::invalid_argument("matern_covariance: h must be >= 0");
  if (h == 0.0) return sigma2;
  const double kh = std::sqrt(8.0) / rho * h;
  if (kh > 700.0) return 0.0;  // K_1 underflows
  return sigma2 * kh * std::cyl_bessel_k(1.0, kh);
}

int EffectSpec::size() const {
  switch (family) {
    case EffectFamily::SpdeMatern:
      return fem->c.dim();
    case EffectFamily::Ar1:
      return t_len;
    case EffectFamily::Rw1:
    case EffectFamily::Rw2:
    case EffectFamily::Iid:
      return n;
    case EffectFamily::SeparableSt:
      return t_len * fem->c.dim();
  }
  return 0;
}

SparseSymMatrix effect_precision(const EffectSpec& spec) {
  switch (spec.family) {
    case EffectFamily::SpdeMatern:
      return spde_matern_precision(*spec.fem, spec.rho, spec.sigma);
    case EffectFamily::Ar1:
      return ar1_precision(spec.t_len, spec.a, spec.sigma);
    case EffectFamily::Rw1:
      return rw1_precision(spec.n, spec.tau, spec.jitter).q;
    case EffectFamily::Rw2:
      return rw2_precision(spec.n, spec.tau, spec.jitter).q;
    case EffectFamily::Iid:
      return iid_precision(spec.n, spec.tau);
    case EffectFamily::SeparableSt:
      return st_separable_precision(spde_matern_precision(*spec.fem, spec.rho, spec.sigma),
                                    spec.a, spec.t_len);
  }
  throw std::logic_error("effect_precision: unknown family");
}

double effect_log_det(const EffectSpec& spec) {
  if (spec.family == EffectFamily::Iid) return spec.n * std::log(spec.tau);
  if (spec.family == EffectFamily::SeparableSt) {
    const SparseSymMatrix qs = spde_matern_precision(*spec.fem, spec.rho, spec.sigma);
    if (spec.t_len == 1) return CholeskyFactor(qs).log_det();
    const SparseSymMatrix qt = ar1_precision(spec.t_len, spec.a, 1.0);
    return qs.dim() * CholeskyFactor(qt).log_det() + spec.t_len * CholeskyFactor(qs).log_det();
  }
  return CholeskyFactor(effect_precision(spec)).log_det();
}

}  // namespace inlarf
