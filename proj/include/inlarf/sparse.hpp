#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <span>
#include <stdexcept>
#include <vector>

namespace inlarf {

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

class NotPositiveDefinite : public std::runtime_error {
public:
  explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

/// Symmetric sparse matrix stored as its lower triangle in canonical form:
/// entries deduplicated (duplicates summed on construction), sorted
/// column-major, with row >= col. Entries given above the diagonal are
/// mirrored into the lower triangle.
class SparseSymMatrix {
public:
  SparseSymMatrix() = default;

  static SparseSymMatrix from_triplets(std::span<const Triplet> triplets, int dim);
  /// Extracts the lower triangle of a (numerically) symmetric Eigen matrix.
  static SparseSymMatrix from_eigen(const Eigen::SparseMatrix<double>& m);

  int dim() const { return dim_; }
  const std::vector<Triplet>& entries() const { return entries_; }

  /// Full symmetric expansion (both triangles).
  Eigen::SparseMatrix<double> full() const;

  SparseSymMatrix scaled(double s) const;
  SparseSymMatrix with_added_diagonal(double eps) const;

private:
  int dim_ = 0;
  std::vector<Triplet> entries_;
};

SparseSymMatrix kron(const SparseSymMatrix& a, const SparseSymMatrix& b);

/// Sparse Cholesky factorization P Q P^T = L L^T with a fill-reducing
/// (AMD) permutation. Requires a positive definite input.
class CholeskyFactor {
public:
  explicit CholeskyFactor(const SparseSymMatrix& q);

  int dim() const { return dim_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  double log_det() const;

  /// Diagonal of Q^{-1}, one triangular solve per column.
  Eigen::VectorXd marginal_variances() const;

  /// Maps iid standard normal z to a draw x with Cov(x) = Q^{-1}.
  Eigen::VectorXd unwhiten(Eigen::VectorXd z) const;

  Eigen::SparseMatrix<double> lower_factor() const;
  Eigen::VectorXi permutation() const;

private:
  int dim_ = 0;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
};

}  // namespace inlarf
