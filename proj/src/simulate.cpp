#include "inlarf/simulate.hpp"

#include "inlarf/gmrf.hpp"
#include "inlarf/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace inlarf {

std::vector<int> StDataset::train_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < n(); ++i)
    if (rows[i].split == Split::Train) idx.push_back(i);
  return idx;
}

std::vector<int> StDataset::test_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < n(); ++i)
    if (rows[i].split == Split::Test) idx.push_back(i);
  return idx;
}

std::vector<int> StDataset::all_indices() const {
  std::vector<int> idx(n());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

Eigen::VectorXd sample_gmrf(const CholeskyFactor& factor, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd z(factor.dim());
  for (int i = 0; i < factor.dim(); ++i) z(i) = nd(rng);
  return factor.unwhiten(std::move(z));
}

Eigen::VectorXd sample_gmrf(const SparseSymMatrix& q, std::uint64_t seed) {
  CholeskyFactor factor(q);
  auto rng = make_rng(seed);
  return sample_gmrf(factor, rng);
}

double StSimConfig::side() const {
  return domain_side > 0.0 ? domain_side : 7.254 / std::sqrt(2.0);
}

double StSimConfig::domain_diagonal() const { return side() * std::sqrt(2.0); }

Eigen::MatrixXd dense_matern_covariance(const std::vector<Eigen::Vector2d>& pts, double sigma2,
                                        double rho) {
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXd cov(n, n);
  for (int i = 0; i < n; ++i) {
    cov(i, i) = sigma2;
    for (int j = 0; j < i; ++j) {
      const double h = (pts[i] - pts[j]).norm();
      cov(i, j) = cov(j, i) = matern_covariance(h, sigma2, rho);
    }
  }
  return cov;
}

namespace {

double f1_nonlinear(double z) { return 2.0 * z * std::sin(2.0 * z); }
double f2_nonlinear(double z) { return std::sin(std::pow(z, 4)) + std::cos(2.5 * std::numbers::pi * z); }

}  // namespace

StDataset simulate_spatiotemporal(const StSimConfig& cfg, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_int_distribution<int> cat_dist(1, 3);

  const double side = cfg.side();
  const int n_total = cfg.n_per_time * cfg.t_len;

  StDataset ds;
  ds.t_len = cfg.t_len;
  ds.rows.resize(n_total);
  std::vector<Eigen::Vector2d> locations(n_total);
  for (int t = 1; t <= cfg.t_len; ++t) {
    for (int i = 0; i < cfg.n_per_time; ++i) {
      const int r = (t - 1) * cfg.n_per_time + i;
      StRow& row = ds.rows[r];
      row.t = t;
      row.x = unif(rng) * side;
      row.y = unif(rng) * side;
      locations[r] = {row.x, row.y};
    }
  }
  for (auto& row : ds.rows) {
    row.z1 = norm(rng);
    row.z2 = unif(rng);
    row.cat = cat_dist(rng);
  }

  // AR(1) evolution of a continuous-space field: innovations sampled from the
  // exact dense Matern covariance over the union of all locations, so the
  // SPDE model is later fitted to data it did not generate.
  Eigen::MatrixXd cov = dense_matern_covariance(locations, cfg.sigma2_spatial, cfg.rho);
  cov.diagonal().array() += 1e-10 * cfg.sigma2_spatial;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("simulate_spatiotemporal: covariance factorization failed");

  Eigen::VectorXd omega = Eigen::VectorXd::Zero(n_total);
  Eigen::VectorXd z(n_total);
  for (int t = 1; t <= cfg.t_len; ++t) {
    for (int i = 0; i < n_total; ++i) z(i) = norm(rng);
    Eigen::VectorXd xi = llt.matrixL() * z;
    if (t == 1)
      omega = xi / std::sqrt(1.0 - cfg.a * cfg.a);  // stationary start
    else
      omega = cfg.a * omega + xi;
    for (int i = 0; i < cfg.n_per_time; ++i) {
      const int r = (t - 1) * cfg.n_per_time + i;
      ds.rows[r].eta_true = omega(r);
    }
  }

  const double eps_sd = std::sqrt(cfg.sigma2_eps);
  for (auto& row : ds.rows) {
    const double g1 = cfg.linear_signal ? cfg.linear_b1 * row.z1 : f1_nonlinear(row.z1);
    const double g2 = cfg.linear_signal ? cfg.linear_b2 * row.z2 : f2_nonlinear(row.z2);
    const double gamma = row.cat == 1 ? cfg.gamma1 : (row.cat == 2 ? cfg.gamma2 : cfg.gamma3);
    row.eta_true += g1 + g2 + gamma;
    row.response = row.eta_true + eps_sd * norm(rng);
  }

  std::vector<int> order(n_total);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = static_cast<int>(std::lround(cfg.train_fraction * n_total));
  for (int k = 0; k < n_total; ++k)
    ds.rows[order[k]].split = k < n_train ? Split::Train : Split::Test;
  return ds;
}

Eigen::MatrixXd jump_design(int n, int k, int segment) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, k);
  for (int j = 0; j < k; ++j)
    for (int r = segment * (j + 1); r < n; ++r) d(r, j) = 1.0;
  return d;
}

StDataset simulate_temporal_jumps(const TemporalSimConfig& cfg, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::bernoulli_distribution bern(cfg.pi_s);

  Eigen::VectorXd w(cfg.k_jumps);
  for (int j = 0; j < cfg.k_jumps; ++j) w(j) = cfg.mu_wj + norm(rng) / std::sqrt(cfg.tau_wj);
  for (int j = 0; j < cfg.k_jumps; ++j)
    if (!bern(rng)) w(j) = -w(j);

  Eigen::VectorXd u_r = Eigen::VectorXd::Zero(cfg.n);
  const double inc_sd = 1.0 / std::sqrt(cfg.tau_ur);
  for (int i = 1; i < cfg.n; ++i) u_r(i) = u_r(i - 1) + inc_sd * norm(rng);

  Eigen::VectorXd mu = Eigen::VectorXd::Constant(cfg.n, cfg.beta0) + u_r;
  if (cfg.k_jumps > 0) mu += jump_design(cfg.n, cfg.k_jumps, cfg.segment) * w;

  const double noise_sd = 1.0 / std::sqrt(cfg.tau_l);
  StDataset ds;
  ds.t_len = cfg.n;
  ds.rows.resize(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    StRow& row = ds.rows[i];
    row.t = i + 1;
    row.eta_true = mu(i);
    row.response = mu(i) + noise_sd * norm(rng);
  }
  return ds;
}

void write_dataset_csv(const StDataset& ds, std::ostream& os) {
  os.precision(17);
  os << "x,y_coord,t,response,z1,z2,cat,split,eta_true\n";
  for (const auto& r : ds.rows) {
    os << r.x << "," << r.y << "," << r.t << "," << r.response << "," << r.z1 << "," << r.z2
       << "," << r.cat << "," << (r.split == Split::Train ? "train" : "test") << "," << r.eta_true
       << "\n";
  }
}

StDataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("dataset csv: empty file");
  if (line != "x,y_coord,t,response,z1,z2,cat,split,eta_true")
    throw std::invalid_argument("dataset csv: unexpected header '" + line + "'");
  StDataset ds;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    StRow r;
    auto next = [&]() {
      if (!std::getline(ls, field, ',')) throw std::invalid_argument("dataset csv: short row");
      return field;
    };
    r.x = std::stod(next());
    r.y = std::stod(next());
    r.t = std::stoi(next());
    r.response = std::stod(next());
    r.z1 = std::stod(next());
    r.z2 = std::stod(next());
    r.cat = std::stoi(next());
    const std::string s = next();
    if (s == "train")
      r.split = Split::Train;
    else if (s == "test")
      r.split = Split::Test;
    else
      throw std::invalid_argument("dataset csv: bad split label '" + s + "'");
    r.eta_true = std::stod(next());
    ds.rows.push_back(r);
    ds.t_len = std::max(ds.t_len, r.t);
  }
  return ds;
}

void write_dataset_csv_file(const StDataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_dataset_csv(ds, os);
}

StDataset read_dataset_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_dataset_csv(is);
}

}  // namespace inlarf
