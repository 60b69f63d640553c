#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "inlarf/mesh.hpp"

#include <Eigen/Dense>

#include <random>
#include <sstream>

using namespace inlarf;

TEST_CASE("build_grid_mesh: counts and margin") {
  const auto m2 = build_grid_mesh({0, 1}, {0, 1}, 2, 2, 0.0);
  CHECK(m2.n_vertices() == 4);
  CHECK(m2.triangles.size() == 2);

  const auto m3 = build_grid_mesh({0, 1}, {0, 1}, 3, 3, 0.0);
  CHECK(m3.n_vertices() == 9);
  CHECK(m3.triangles.size() == 8);  // 2 (nx-1)(ny-1)

  const auto mm = build_grid_mesh({0, 1}, {0, 1}, 2, 2, 0.5);
  double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
  for (const auto& v : mm.vertices) {
    xmin = std::min(xmin, v.x());
    xmax = std::max(xmax, v.x());
    ymin = std::min(ymin, v.y());
    ymax = std::max(ymax, v.y());
  }
  CHECK(xmin == doctest::Approx(-0.5));
  CHECK(xmax == doctest::Approx(1.5));
  CHECK(ymin == doctest::Approx(-0.5));
  CHECK(ymax == doctest::Approx(1.5));

  CHECK_THROWS_AS(build_grid_mesh({1, 1}, {0, 1}, 2, 2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid_mesh({0, 1}, {0, 1}, 1, 2, 0.0), std::invalid_argument);
}

TEST_CASE("build_grid_mesh: triangles are CCW and tile the bounding box") {
  const auto m = build_grid_mesh({0, 2}, {0, 1}, 5, 4, 0.1);
  double total = 0.0;
  for (const auto& t : m.triangles) {
    const auto& p0 = m.vertices[t[0]];
    const auto& p1 = m.vertices[t[1]];
    const auto& p2 = m.vertices[t[2]];
    const double a2 =
        (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y());
    CHECK(a2 > 0.0);
    total += 0.5 * a2;
  }
  CHECK(total == doctest::Approx(2.4 * 1.2).epsilon(1e-9));  // extended box area
}

TEST_CASE("fem_matrices: hand assembly oracle for a single right triangle") {
  Mesh2D tri;
  tri.vertices = {{0, 0}, {1, 0}, {0, 1}};
  tri.triangles = {{0, 1, 2}};
  const auto fem = fem_matrices(tri);
  for (int i = 0; i < 3; ++i) CHECK(fem.c_diag(i) == doctest::Approx(1.0 / 6.0));
  // stiffness of the unit right triangle
  Eigen::MatrixXd g(fem.g.full());
  CHECK(g(0, 0) == doctest::Approx(1.0));
  CHECK(g(1, 1) == doctest::Approx(0.5));
  CHECK(g(2, 2) == doctest::Approx(0.5));
  CHECK(g(1, 0) == doctest::Approx(-0.5));
  CHECK(g(2, 1) == doctest::Approx(0.0));
}

TEST_CASE("fem_matrices: G rows sum to zero, mass conserves area") {
  const auto mesh = build_grid_mesh({0, 1}, {0, 1}, 3, 3, 0.0);
  const auto fem = fem_matrices(mesh);
  Eigen::MatrixXd g(fem.g.full());
  const Eigen::VectorXd rowsum = g * Eigen::VectorXd::Ones(g.cols());
  CHECK(rowsum.lpNorm<Eigen::Infinity>() <= 1e-10);
  CHECK(fem.c_diag.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fem_matrices: independent of triangle ordering") {
  auto mesh = build_grid_mesh({0, 1}, {0, 1}, 4, 4, 0.0);
  const auto fem_a = fem_matrices(mesh);
  std::reverse(mesh.triangles.begin(), mesh.triangles.end());
  const auto fem_b = fem_matrices(mesh);
  CHECK(Eigen::MatrixXd(fem_a.g.full()).isApprox(Eigen::MatrixXd(fem_b.g.full()), 1e-14));
  CHECK(fem_a.c_diag.isApprox(fem_b.c_diag, 1e-14));
}

TEST_CASE("projector: vertex, centroid, reconstruction") {
  const auto mesh = build_grid_mesh({0, 1}, {0, 1}, 3, 3, 0.0);

  // exactly on vertex 4 (the center)
  std::vector<Eigen::Vector2d> pts = {mesh.vertices[4]};
  auto a = projector(mesh, pts);
  CHECK(a.nonZeros() == 1);
  CHECK(a.coeff(0, 4) == doctest::Approx(1.0));

  // centroid of the first triangle
  const auto& t0 = mesh.triangles[0];
  const Eigen::Vector2d centroid =
      (mesh.vertices[t0[0]] + mesh.vertices[t0[1]] + mesh.vertices[t0[2]]) / 3.0;
  pts = {centroid};
  a = projector(mesh, pts);
  for (int k = 0; k < 3; ++k) CHECK(a.coeff(0, t0[k]) == doctest::Approx(1.0 / 3.0));

  // random interior points reproduce their own coordinates
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<Eigen::Vector2d> rnd;
  for (int i = 0; i < 50; ++i) rnd.emplace_back(u(rng), u(rng));
  a = projector(mesh, rnd);
  for (int i = 0; i < 50; ++i) {
    Eigen::Vector2d rec = Eigen::Vector2d::Zero();
    double wsum = 0.0;
    for (int col = 0; col < mesh.n_vertices(); ++col) {
      const double w = a.coeff(i, col);
      if (w != 0.0) {
        rec += w * mesh.vertices[col];
        wsum += w;
      }
    }
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((rec - rnd[i]).norm() <= 1e-12);
  }
}

TEST_CASE("projector: point outside raises with the offending index") {
  const auto mesh = build_grid_mesh({0, 1}, {0, 1}, 3, 3, 0.0);
  std::vector<Eigen::Vector2d> pts = {{0.5, 0.5}, {2.0, 2.0}};
  try {
    projector(mesh, pts);
    FAIL("expected PointOutsideMesh");
  } catch (const PointOutsideMesh& e) {
    CHECK(e.point_index == 1);
  }
}

TEST_CASE("projector: constant vector maps to ones") {
  const auto mesh = build_grid_mesh({0, 1}, {0, 1}, 4, 4, 0.2);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i < 30; ++i) pts.emplace_back(u(rng), u(rng));
  const auto a = projector(mesh, pts);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh.n_vertices());
  CHECK((a * ones - Eigen::VectorXd::Ones(30)).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("mesh text round trip") {
  const auto mesh = build_grid_mesh({0, 2}, {1, 3}, 3, 4, 0.1);
  std::stringstream ss;
  write_mesh(mesh, ss);
  const auto back = read_mesh(ss);
  REQUIRE(back.n_vertices() == mesh.n_vertices());
  REQUIRE(back.triangles.size() == mesh.triangles.size());
  for (int i = 0; i < mesh.n_vertices(); ++i)
    CHECK((back.vertices[i] - mesh.vertices[i]).norm() == 0.0);
  CHECK(back.triangles == mesh.triangles);
}
