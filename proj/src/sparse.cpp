#include "inlarf/sparse.hpp"

#include <algorithm>
#include <cmath>

namespace inlarf {

SparseSymMatrix SparseSymMatrix::from_triplets(std::span<const Triplet> triplets, int dim) {
  if (dim <= 0) throw std::invalid_argument("SparseSymMatrix: dim must be positive");
  std::vector<Triplet> lower;
  lower.reserve(triplets.size());
  for (const auto& t : triplets) {
    if (t.row < 0 || t.row >= dim || t.col < 0 || t.col >= dim)
      throw std::invalid_argument("SparseSymMatrix: index out of range");
    // mirror upper-triangle input into the lower triangle
    if (t.row >= t.col)
      lower.push_back(t);
    else
      lower.push_back({t.col, t.row, t.value});
  }
  std::sort(lower.begin(), lower.end(), [](const Triplet& a, const Triplet& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });
  SparseSymMatrix out;
  out.dim_ = dim;
  for (const auto& t : lower) {
    if (!out.entries_.empty() && out.entries_.back().row == t.row &&
        out.entries_.back().col == t.col) {
      out.entries_.back().value += t.value;
    } else {
      out.entries_.push_back(t);
    }
  }
  return out;
}

SparseSymMatrix SparseSymMatrix::from_eigen(const Eigen::SparseMatrix<double>& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("from_eigen: matrix not square");
  std::vector<Triplet> tr;
  tr.reserve(static_cast<size_t>(m.nonZeros()) / 2 + static_cast<size_t>(m.rows()));
  for (int k = 0; k < m.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
      if (it.row() >= it.col() && it.value() != 0.0)
        tr.push_back({static_cast<int>(it.row()), static_cast<int>(it.col()), it.value()});
    }
  }
  return from_triplets(tr, static_cast<int>(m.rows()));
}

Eigen::SparseMatrix<double> SparseSymMatrix::full() const {
  std::vector<Eigen::Triplet<double>> tr;
  tr.reserve(2 * entries_.size());
  for (const auto& t : entries_) {
    tr.emplace_back(t.row, t.col, t.value);
    if (t.row != t.col) tr.emplace_back(t.col, t.row, t.value);
  }
  Eigen::SparseMatrix<double> m(dim_, dim_);
  m.setFromTriplets(tr.begin(), tr.end());
  m.makeCompressed();
  return m;
}

SparseSymMatrix SparseSymMatrix::scaled(double s) const {
  SparseSymMatrix out = *this;
  for (auto& t : out.entries_) t.value *= s;
  return out;
}

SparseSymMatrix SparseSymMatrix::with_added_diagonal(double eps) const {
  std::vector<Triplet> tr = entries_;
  for (int i = 0; i < dim_; ++i) tr.push_back({i, i, eps});
  return from_triplets(tr, dim_);
}

SparseSymMatrix kron(const SparseSymMatrix& a, const SparseSymMatrix& b) {
  const int db = b.dim();
  std::vector<Triplet> tr;
  tr.reserve(4 * a.entries().size() * b.entries().size());
  // expand both lower triangles symmetrically, keep the lower half of the product
  auto each_full = [](const SparseSymMatrix& m, auto&& fn) {
    for (const auto& t : m.entries()) {
      fn(t.row, t.col, t.value);
      if (t.row != t.col) fn(t.col, t.row, t.value);
    }
  };
  each_full(a, [&](int i, int j, double va) {
    each_full(b, [&](int k, int l, double vb) {
      const int row = i * db + k;
      const int col = j * db + l;
      if (row >= col) tr.push_back({row, col, va * vb});
    });
  });
  return SparseSymMatrix::from_triplets(tr, a.dim() * db);
}

CholeskyFactor::CholeskyFactor(const SparseSymMatrix& q) : dim_(q.dim()) {
  llt_.compute(q.full());
  if (llt_.info() != Eigen::Success)
    throw NotPositiveDefinite("CholeskyFactor: matrix is not positive definite");
  // Eigen can return Success with a non-finite factor on near-singular input
  const double last = llt_.matrixL().nestedExpression().diagonal()(dim_ - 1);
  if (!std::isfinite(last) || last <= 0.0)
    throw NotPositiveDefinite("CholeskyFactor: non-positive pivot");
}

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& b) const {
  if (b.size() != dim_) throw std::invalid_argument("CholeskyFactor::solve: dimension mismatch");
  return llt_.solve(b);
}

double CholeskyFactor::log_det() const {
  return 2.0 * llt_.matrixL().nestedExpression().diagonal().array().log().sum();
}

Eigen::VectorXd CholeskyFactor::marginal_variances() const {
  const auto& perm = llt_.permutationP().indices();
  Eigen::VectorXd out(dim_);
  Eigen::VectorXd work(dim_);
  for (int i = 0; i < dim_; ++i) {
    work.setZero();
    work(perm(i)) = 1.0;  // P e_i
    llt_.matrixL().solveInPlace(work);
    out(i) = work.squaredNorm();
  }
  return out;
}

Eigen::VectorXd CholeskyFactor::unwhiten(Eigen::VectorXd z) const {
  if (z.size() != dim_) throw std::invalid_argument("CholeskyFactor::unwhiten: dimension mismatch");
  llt_.matrixU().solveInPlace(z);
  return llt_.permutationPinv() * z;
}

Eigen::SparseMatrix<double> CholeskyFactor::lower_factor() const {
  return llt_.matrixL();
}

Eigen::VectorXi CholeskyFactor::permutation() const {
  return llt_.permutationP().indices();
}

}  // namespace inlarf
