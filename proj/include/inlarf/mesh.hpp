#pragma once

#include "inlarf/sparse.hpp"

#include <Eigen/Dense>

#include <array>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

namespace inlarf {

class PointOutsideMesh : public std::runtime_error {
public:
  PointOutsideMesh(int index, const std::string& what)
      : std::runtime_error(what), point_index(index) {}
  int point_index;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Triangulation of a rectangle: vertices plus counter-clockwise triangles.
struct Mesh2D {
  std::vector<Eigen::Vector2d> vertices;
  std::vector<std::array<int, 3>> triangles;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
};

/// Structured grid over [x_range] x [y_range], each range extended on both
/// sides by margin * extent; nx * ny vertices, each cell split in two.
Mesh2D build_grid_mesh(Interval x_range, Interval y_range, int nx, int ny, double margin);

/// Lumped mass matrix C (diagonal) and stiffness matrix G for piecewise
/// linear basis functions on the mesh.
struct FemMatrices {
  SparseSymMatrix c;
  SparseSymMatrix g;
  Eigen::VectorXd c_diag;  // convenience copy of diag(C)
};

FemMatrices fem_matrices(const Mesh2D& mesh);

/// Barycentric projector: row i carries the weights of point i in its
/// containing triangle (at most 3 nonzeros summing to one).
Eigen::SparseMatrix<double> projector(const Mesh2D& mesh, std::span<const Eigen::Vector2d> points);

void write_mesh(const Mesh2D& mesh, std::ostream& os);
Mesh2D read_mesh(std::istream& is);

}  // namespace inlarf
