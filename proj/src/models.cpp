#include "inlarf/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace inlarf {

namespace {

Eigen::MatrixXd st_fixed_columns(const StDataset& data, std::span<const int> rows) {
  Eigen::MatrixXd x(rows.size(), 5);
  for (size_t i = 0; i < rows.size(); ++i) {
    const StRow& r = data.rows[rows[i]];
    x(i, 0) = r.z1;
    x(i, 1) = r.z2;
    x(i, 2) = r.cat == 1 ? 1.0 : 0.0;
    x(i, 3) = r.cat == 2 ? 1.0 : 0.0;
    x(i, 4) = r.cat == 3 ? 1.0 : 0.0;
  }
  return x;
}

}  // namespace

StudyModel make_st_model(const StDataset& data, const StModelConfig& cfg) {
  double x0 = cfg.domain_x0, x1 = cfg.domain_x1, y0 = cfg.domain_y0, y1 = cfg.domain_y1;
  if (x1 <= x0 || y1 <= y0) {
    x0 = y0 = std::numeric_limits<double>::infinity();
    x1 = y1 = -std::numeric_limits<double>::infinity();
    for (const auto& r : data.rows) {
      x0 = std::min(x0, r.x);
      x1 = std::max(x1, r.x);
      y0 = std::min(y0, r.y);
      y1 = std::max(y1, r.y);
    }
  }
  const double boundary_dist = std::hypot(x1 - x0, y1 - y0);
  const double rho0 = cfg.pc_rho0 > 0.0 ? cfg.pc_rho0 : boundary_dist / 5.0;

  auto mesh = std::make_shared<Mesh2D>(
      build_grid_mesh({x0, x1}, {y0, y1}, cfg.mesh_nx, cfg.mesh_ny, cfg.mesh_margin));
  auto fem = std::make_shared<FemMatrices>(fem_matrices(*mesh));
  const int n_vertices = mesh->n_vertices();
  const int t_len = data.t_len;

  auto st_block = [mesh, n_vertices, t_len](const StDataset& ds, std::span<const int> rows) {
    std::vector<Eigen::Vector2d> pts;
    pts.reserve(rows.size());
    for (int r : rows) pts.emplace_back(ds.rows[r].x, ds.rows[r].y);
    const Eigen::SparseMatrix<double> spatial = projector(*mesh, pts);
    std::vector<Eigen::Triplet<double>> tr;
    tr.reserve(spatial.nonZeros());
    for (int k = 0; k < spatial.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(spatial, k); it; ++it) {
        const int t = ds.rows[rows[it.row()]].t;  // 1-based
        tr.emplace_back(static_cast<int>(it.row()), (t - 1) * n_vertices + static_cast<int>(it.col()),
                        it.value());
      }
    Eigen::SparseMatrix<double> block(static_cast<int>(rows.size()), t_len * n_vertices);
    block.setFromTriplets(tr.begin(), tr.end());
    block.makeCompressed();
    return block;
  };

  StudyModel model;
  model.spatial = true;
  model.target_effect = 0;

  model.make_spec = [=](const StDataset& ds, std::span<const int> rows) {
    LgmSpec spec;
    Effect st;
    st.spec.family = EffectFamily::SeparableSt;
    st.spec.fem = fem;
    st.spec.t_len = t_len;
    st.spec.rho = rho0;
    st.spec.sigma = cfg.init_sigma;
    st.spec.a = cfg.init_a;
    st.spec.rho_sigma_free = true;
    st.spec.a_free = true;
    st.spec.pc_rho0 = rho0;
    st.spec.pc_sigma0 = cfg.pc_sigma0;
    st.spec.a_prior_var = cfg.a_prior_var;
    st.a_block = st_block(ds, rows);
    spec.effects.push_back(std::move(st));
    spec.fixed_design = st_fixed_columns(ds, rows);
    spec.fixed_prec = cfg.fixed_prec;
    spec.tau_obs = cfg.init_tau_obs;
    spec.tau_obs_free = true;
    return spec;
  };

  model.make_design = [=](const StDataset& ds, std::span<const int> rows) {
    const Eigen::SparseMatrix<double> block = st_block(ds, rows);
    const Eigen::MatrixXd fixed = st_fixed_columns(ds, rows);
    const int n = static_cast<int>(rows.size());
    const int j = t_len * n_vertices;
    std::vector<Eigen::Triplet<double>> tr;
    for (int k = 0; k < block.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(block, k); it; ++it)
        tr.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int c = 0; c < 5; ++c)
      for (int i = 0; i < n; ++i)
        if (fixed(i, c) != 0.0) tr.emplace_back(i, j + c, fixed(i, c));
    Eigen::SparseMatrix<double> a(n, j + 5);
    a.setFromTriplets(tr.begin(), tr.end());
    a.makeCompressed();
    return a;
  };

  model.rf_features_full = [](const StDataset& ds, std::span<const int> rows) {
    Eigen::MatrixXd x(rows.size(), 8);
    for (size_t i = 0; i < rows.size(); ++i) {
      const StRow& r = ds.rows[rows[i]];
      x(i, 0) = r.z1;
      x(i, 1) = r.z2;
      x(i, 2) = r.cat == 1 ? 1.0 : 0.0;
      x(i, 3) = r.cat == 2 ? 1.0 : 0.0;
      x(i, 4) = r.cat == 3 ? 1.0 : 0.0;
      x(i, 5) = r.t;
      x(i, 6) = r.x;
      x(i, 7) = r.y;
    }
    return x;
  };
  model.rf_features_minimal = [](const StDataset& ds, std::span<const int> rows) {
    Eigen::MatrixXd x(rows.size(), 3);
    for (size_t i = 0; i < rows.size(); ++i) {
      const StRow& r = ds.rows[rows[i]];
      x(i, 0) = r.t;
      x(i, 1) = r.x;
      x(i, 2) = r.y;
    }
    return x;
  };
  // spatio-temporal nodes live at (vertex, time); features are t, x, y
  model.target_node_features = [mesh, n_vertices](std::span<const int> nodes) {
    Eigen::MatrixXd x(nodes.size(), 3);
    for (size_t i = 0; i < nodes.size(); ++i) {
      const int t = nodes[i] / n_vertices + 1;
      const int g = nodes[i] % n_vertices;
      x(i, 0) = t;
      x(i, 1) = mesh->vertices[g].x();
      x(i, 2) = mesh->vertices[g].y();
    }
    return x;
  };
  // a row belongs to the node with the largest barycentric weight
  model.row_node = [mesh, n_vertices](const StRow& r) {
    std::vector<Eigen::Vector2d> pt = {{r.x, r.y}};
    const Eigen::SparseMatrix<double> p = projector(*mesh, pt);
    int best = 0;
    double best_w = -1.0;
    for (int k = 0; k < p.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(p, k); it; ++it)
        if (it.value() > best_w) {
          best_w = it.value();
          best = static_cast<int>(it.col());
        }
    return (r.t - 1) * n_vertices + best;
  };
  return model;
}

StudyModel make_temporal_model(const StDataset& data, const TemporalModelConfig& cfg) {
  const int t_len = data.t_len;

  auto time_block = [t_len](const StDataset& ds, std::span<const int> rows) {
    std::vector<Eigen::Triplet<double>> tr;
    tr.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i)
      tr.emplace_back(static_cast<int>(i), ds.rows[rows[i]].t - 1, 1.0);
    Eigen::SparseMatrix<double> block(static_cast<int>(rows.size()), t_len);
    block.setFromTriplets(tr.begin(), tr.end());
    return block;
  };

  StudyModel model;
  model.spatial = false;
  model.target_effect = 0;
  model.fit_options.integrate_hyper = cfg.integrate_hyper;

  model.make_spec = [=](const StDataset& ds, std::span<const int> rows) {
    LgmSpec spec;
    Effect rw2;
    rw2.spec.family = EffectFamily::Rw2;
    rw2.spec.n = t_len;
    rw2.spec.tau = cfg.init_tau_rw2;
    rw2.spec.tau_free = true;
    rw2.a_block = time_block(ds, rows);
    spec.effects.push_back(std::move(rw2));
    spec.fixed_design = Eigen::MatrixXd::Ones(static_cast<int>(rows.size()), 1);
    spec.fixed_prec = cfg.fixed_prec;
    spec.tau_obs = cfg.init_tau_obs;
    spec.tau_obs_free = true;
    return spec;
  };

  model.make_design = [=](const StDataset& ds, std::span<const int> rows) {
    const int n = static_cast<int>(rows.size());
    std::vector<Eigen::Triplet<double>> tr;
    for (int i = 0; i < n; ++i) {
      tr.emplace_back(i, ds.rows[rows[i]].t - 1, 1.0);
      tr.emplace_back(i, t_len, 1.0);  // intercept
    }
    Eigen::SparseMatrix<double> a(n, t_len + 1);
    a.setFromTriplets(tr.begin(), tr.end());
    return a;
  };

  auto time_only = [](const StDataset& ds, std::span<const int> rows) {
    Eigen::MatrixXd x(rows.size(), 1);
    for (size_t i = 0; i < rows.size(); ++i) x(i, 0) = ds.rows[rows[i]].t;
    return x;
  };
  model.rf_features_full = time_only;
  model.rf_features_minimal = time_only;
  model.target_node_features = [](std::span<const int> nodes) {
    Eigen::MatrixXd x(nodes.size(), 1);
    for (size_t i = 0; i < nodes.size(); ++i) x(i, 0) = nodes[i] + 1;
    return x;
  };
  model.row_node = [](const StRow& r) { return r.t - 1; };
  return model;
}

}  // namespace inlarf
