#include "inlarf/mesh.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace inlarf {

Mesh2D build_grid_mesh(Interval x_range, Interval y_range, int nx, int ny, double margin) {
  if (x_range.hi <= x_range.lo || y_range.hi <= y_range.lo)
    throw std::invalid_argument("build_grid_mesh: degenerate range");
  if (nx < 2 || ny < 2) throw std::invalid_argument("build_grid_mesh: nx, ny must be >= 2");
  if (margin < 0.0) throw std::invalid_argument("build_grid_mesh: margin must be >= 0");

  const double mx = margin * (x_range.hi - x_range.lo);
  const double my = margin * (y_range.hi - y_range.lo);
  const double x0 = x_range.lo - mx, x1 = x_range.hi + mx;
  const double y0 = y_range.lo - my, y1 = y_range.hi + my;

  Mesh2D mesh;
  mesh.vertices.reserve(static_cast<size_t>(nx) * ny);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double x = x0 + (x1 - x0) * ix / (nx - 1);
      const double y = y0 + (y1 - y0) * iy / (ny - 1);
      mesh.vertices.emplace_back(x, y);
    }
  }
  mesh.triangles.reserve(2 * static_cast<size_t>(nx - 1) * (ny - 1));
  for (int iy = 0; iy + 1 < ny; ++iy) {
    for (int ix = 0; ix + 1 < nx; ++ix) {
      const int v00 = iy * nx + ix;
      const int v10 = v00 + 1;
      const int v01 = v00 + nx;
      const int v11 = v01 + 1;
      mesh.triangles.push_back({v00, v10, v11});
      mesh.triangles.push_back({v00, v11, v01});
    }
  }
  return mesh;
}

namespace {

double signed_area2(const Eigen::Vector2d& p0, const Eigen::Vector2d& p1,
                    const Eigen::Vector2d& p2) {
  return (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y());
}

}  // namespace

FemMatrices fem_matrices(const Mesh2D& mesh) {
  const int n = mesh.n_vertices();
  std::vector<Triplet> c_tr, g_tr;
  c_tr.reserve(3 * mesh.triangles.size());
  g_tr.reserve(6 * mesh.triangles.size());
  for (const auto& tri : mesh.triangles) {
    const auto& p0 = mesh.vertices[tri[0]];
    const auto& p1 = mesh.vertices[tri[1]];
    const auto& p2 = mesh.vertices[tri[2]];
    const double a2 = signed_area2(p0, p1, p2);
    if (a2 <= 0.0) throw std::invalid_argument("fem_matrices: degenerate or clockwise triangle");
    const double area = 0.5 * a2;
    // edge opposite each vertex
    const Eigen::Vector2d e[3] = {p2 - p1, p0 - p2, p1 - p0};
    for (int a = 0; a < 3; ++a) {
      c_tr.push_back({tri[a], tri[a], area / 3.0});
      for (int b = 0; b <= a; ++b)
        g_tr.push_back({tri[a], tri[b], e[a].dot(e[b]) / (4.0 * area)});
    }
  }
  FemMatrices fem;
  fem.c = SparseSymMatrix::from_triplets(c_tr, n);
  fem.g = SparseSymMatrix::from_triplets(g_tr, n);
  fem.c_diag = Eigen::VectorXd::Zero(n);
  for (const auto& t : fem.c.entries()) fem.c_diag(t.row) = t.value;
  return fem;
}

Eigen::SparseMatrix<double> projector(const Mesh2D& mesh, std::span<const Eigen::Vector2d> points) {
  constexpr double tol = 1e-12;
  std::vector<Eigen::Triplet<double>> tr;
  tr.reserve(3 * points.size());
  for (size_t ip = 0; ip < points.size(); ++ip) {
    const Eigen::Vector2d& p = points[ip];
    bool found = false;
    for (const auto& tri : mesh.triangles) {
      const auto& p0 = mesh.vertices[tri[0]];
      const auto& p1 = mesh.vertices[tri[1]];
      const auto& p2 = mesh.vertices[tri[2]];
      const double a2 = signed_area2(p0, p1, p2);
      double w1 = signed_area2(p0, p, p2) / a2;
      double w2 = signed_area2(p0, p1, p) / a2;
      double w0 = 1.0 - w1 - w2;
      if (w0 < -tol || w1 < -tol || w2 < -tol) continue;
      double w[3] = {w0, w1, w2};
      double sum = 0.0;
      for (double& wi : w) {
        if (wi < 0.0) wi = 0.0;
        sum += wi;
      }
      for (int a = 0; a < 3; ++a) {
        const double wi = w[a] / sum;
        if (wi > tol) tr.emplace_back(static_cast<int>(ip), tri[a], wi);
      }
      found = true;
      break;
    }
    if (!found)
      throw PointOutsideMesh(static_cast<int>(ip),
                             "projector: point " + std::to_string(ip) + " outside mesh");
  }
  Eigen::SparseMatrix<double> a(static_cast<int>(points.size()), mesh.n_vertices());
  a.setFromTriplets(tr.begin(), tr.end());
  a.makeCompressed();
  return a;
}

void write_mesh(const Mesh2D& mesh, std::ostream& os) {
  os.precision(17);
  for (const auto& v : mesh.vertices) os << "v " << v.x() << " " << v.y() << "\n";
  for (const auto& t : mesh.triangles) os << "t " << t[0] << " " << t[1] << " " << t[2] << "\n";
}

Mesh2D read_mesh(std::istream& is) {
  Mesh2D mesh;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      double x, y;
      ls >> x >> y;
      mesh.vertices.emplace_back(x, y);
    } else if (tag == "t") {
      std::array<int, 3> t{};
      ls >> t[0] >> t[1] >> t[2];
      mesh.triangles.push_back(t);
    } else {
      throw std::invalid_argument("read_mesh: unknown line tag '" + tag + "'");
    }
  }
  return mesh;
}

}  // namespace inlarf
