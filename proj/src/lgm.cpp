#include "inlarf/lgm.hpp"

#include "inlarf/nelder_mead.hpp"

#include <cmath>
#include <numbers>

namespace inlarf {

namespace {

double logit_pm1(double a) { return std::log((1.0 + a) / (1.0 - a)); }
double inv_logit_pm1(double z) { return std::tanh(0.5 * z); }

constexpr double theta_bound = 40.0;  // |internal value| beyond this is degenerate

struct Materialized {
  std::vector<EffectSpec> specs;
  double tau_obs = 1.0;
};

Materialized materialize(const LgmSpec& spec, const Eigen::VectorXd& theta) {
  Materialized m;
  m.tau_obs = spec.tau_obs;
  int k = 0;
  if (spec.tau_obs_free) m.tau_obs = std::exp(theta(k++));
  m.specs.reserve(spec.effects.size());
  for (const auto& e : spec.effects) {
    EffectSpec s = e.spec;
    if (s.tau_free) s.tau = std::exp(theta(k++));
    if (s.rho_sigma_free) {
      s.rho = std::exp(theta(k));
      s.sigma = std::exp(theta(k + 1));
      k += 2;
    }
    if (s.a_free) s.a = inv_logit_pm1(theta(k++));
    m.specs.push_back(std::move(s));
  }
  if (k != theta.size()) throw std::invalid_argument("theta has wrong length");
  return m;
}

int count_free(const LgmSpec& spec) {
  int k = spec.tau_obs_free ? 1 : 0;
  for (const auto& e : spec.effects)
    k += (e.spec.tau_free ? 1 : 0) + (e.spec.rho_sigma_free ? 2 : 0) + (e.spec.a_free ? 1 : 0);
  return k;
}

double log_gamma_density_on_log_scale(double theta, const LogGammaPrior& p) {
  // Gamma(shape, rate) prior on tau, evaluated in theta = log tau
  return p.shape * std::log(p.rate) - std::lgamma(p.shape) + p.shape * theta -
         p.rate * std::exp(theta);
}

Eigen::VectorXd effective_precisions(const LgmSpec& spec, double tau_obs) {
  const int n = spec.n_obs();
  Eigen::VectorXd tau_eff(n);
  const Eigen::VectorXd extra = spec.extra_var_or_zero();
  for (int i = 0; i < n; ++i) tau_eff(i) = 1.0 / (1.0 / tau_obs + extra(i));
  return tau_eff;
}

Eigen::SparseMatrix<double> prior_precision(const LgmSpec& spec,
                                            const std::vector<EffectSpec>& specs) {
  std::vector<Eigen::Triplet<double>> tr;
  int start = 0;
  for (const auto& s : specs) {
    const SparseSymMatrix q = effect_precision(s);
    for (const auto& t : q.entries()) {
      tr.emplace_back(start + t.row, start + t.col, t.value);
      if (t.row != t.col) tr.emplace_back(start + t.col, start + t.row, t.value);
    }
    start += s.size();
  }
  for (int j = 0; j < spec.n_fixed(); ++j) tr.emplace_back(start + j, start + j, spec.fixed_prec);
  const int dim = start + spec.n_fixed();
  Eigen::SparseMatrix<double> q(dim, dim);
  q.setFromTriplets(tr.begin(), tr.end());
  q.makeCompressed();
  return q;
}

struct Assembled {
  Eigen::VectorXd mu;
  SparseSymMatrix q_post;
  std::shared_ptr<const CholeskyFactor> factor;
  Eigen::VectorXd tau_eff;
  Eigen::VectorXd resid;  // y - offset
  Eigen::VectorXd b;      // A^T diag(tau_eff) resid
  double log_det_prior = 0.0;
};

Assembled assemble(const LgmSpec& spec, const Eigen::VectorXd& theta, const Eigen::VectorXd& y) {
  if (y.size() != spec.n_obs()) throw std::invalid_argument("lgm: y has wrong length");
  const Materialized m = materialize(spec, theta);

  Assembled out;
  out.tau_eff = effective_precisions(spec, m.tau_obs);
  out.resid = y - spec.offset_or_zero();

  if (spec.latent_dim() == 0) {  // pure-noise model
    out.mu.resize(0);
    out.b.resize(0);
    return out;
  }

  const Eigen::SparseMatrix<double> a = spec.design();
  Eigen::SparseMatrix<double> q = prior_precision(spec, m.specs);
  const Eigen::SparseMatrix<double> at = a.transpose();
  q += (at * out.tau_eff.asDiagonal() * a).pruned();

  out.q_post = SparseSymMatrix::from_eigen(q);
  out.factor = std::make_shared<CholeskyFactor>(out.q_post);
  out.b = at * out.tau_eff.cwiseProduct(out.resid).eval();
  out.mu = out.factor->solve(out.b);

  out.log_det_prior = spec.n_fixed() * std::log(spec.fixed_prec);
  for (const auto& s : m.specs) out.log_det_prior += effect_log_det(s);
  return out;
}

double log_marginal_from(const LgmSpec& spec, const Assembled& a) {
  const int n = spec.n_obs();
  const double quad = a.resid.dot(a.tau_eff.cwiseProduct(a.resid)) - a.b.dot(a.mu);
  const double log_det_post = a.factor ? a.factor->log_det() : 0.0;
  return 0.5 * a.log_det_prior + 0.5 * a.tau_eff.array().log().sum() - 0.5 * log_det_post -
         0.5 * quad - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

}  // namespace

int LgmSpec::n_obs() const {
  if (!effects.empty()) return static_cast<int>(effects.front().a_block.rows());
  return static_cast<int>(fixed_design.rows());
}

int LgmSpec::latent_dim() const {
  int d = n_fixed();
  for (const auto& e : effects) d += e.spec.size();
  return d;
}

int LgmSpec::effect_start(int k) const {
  int start = 0;
  for (int i = 0; i < k; ++i) start += effects[i].spec.size();
  return start;
}

int LgmSpec::fixed_start() const { return effect_start(static_cast<int>(effects.size())); }

Eigen::SparseMatrix<double> LgmSpec::design() const {
  const int n = n_obs();
  std::vector<Eigen::Triplet<double>> tr;
  int start = 0;
  for (const auto& e : effects) {
    if (e.a_block.rows() != n) throw std::invalid_argument("lgm: inconsistent block row counts");
    if (e.a_block.cols() != e.spec.size())
      throw std::invalid_argument("lgm: block width does not match effect size");
    for (int k = 0; k < e.a_block.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(e.a_block, k); it; ++it)
        tr.emplace_back(static_cast<int>(it.row()), start + static_cast<int>(it.col()),
                        it.value());
    start += e.spec.size();
  }
  for (int j = 0; j < n_fixed(); ++j)
    for (int i = 0; i < n; ++i)
      if (fixed_design(i, j) != 0.0) tr.emplace_back(i, start + j, fixed_design(i, j));
  Eigen::SparseMatrix<double> a(n, start + n_fixed());
  a.setFromTriplets(tr.begin(), tr.end());
  a.makeCompressed();
  return a;
}

Eigen::VectorXd LgmSpec::offset_or_zero() const {
  return offset.size() ? offset : Eigen::VectorXd::Zero(n_obs());
}

Eigen::VectorXd LgmSpec::extra_var_or_zero() const {
  return extra_obs_variance.size() ? extra_obs_variance : Eigen::VectorXd::Zero(n_obs());
}

std::vector<std::string> hyper_names(const LgmSpec& spec) {
  std::vector<std::string> names;
  if (spec.tau_obs_free) names.push_back("log_tau_obs");
  for (size_t k = 0; k < spec.effects.size(); ++k) {
    const auto& s = spec.effects[k].spec;
    const std::string base = "effect" + std::to_string(k);
    if (s.tau_free) names.push_back(base + ".log_tau");
    if (s.rho_sigma_free) {
      names.push_back(base + ".log_rho");
      names.push_back(base + ".log_sigma");
    }
    if (s.a_free) names.push_back(base + ".logit_a");
  }
  return names;
}

Eigen::VectorXd initial_theta(const LgmSpec& spec) {
  Eigen::VectorXd theta(count_free(spec));
  int k = 0;
  if (spec.tau_obs_free) theta(k++) = std::log(spec.tau_obs);
  for (const auto& e : spec.effects) {
    const auto& s = e.spec;
    if (s.tau_free) theta(k++) = std::log(s.tau);
    if (s.rho_sigma_free) {
      theta(k++) = std::log(s.rho);
      theta(k++) = std::log(s.sigma);
    }
    if (s.a_free) theta(k++) = logit_pm1(s.a);
  }
  return theta;
}

double pc_prior_matern_logdensity(double rho, double sigma, double rho0, double sigma0) {
  if (rho <= 0.0 || sigma <= 0.0 || rho0 <= 0.0 || sigma0 <= 0.0)
    throw std::invalid_argument("pc_prior_matern_logdensity: arguments must be positive");
  const double lam_rho = -std::log(0.5) * rho0;
  const double lam_sigma = -std::log(0.5) / sigma0;
  return std::log(lam_rho) - 2.0 * std::log(rho) - lam_rho / rho + std::log(lam_sigma) -
         lam_sigma * sigma;
}

double log_prior(const LgmSpec& spec, const Eigen::VectorXd& theta) {
  double lp = 0.0;
  int k = 0;
  if (spec.tau_obs_free) lp += log_gamma_density_on_log_scale(theta(k++), spec.tau_obs_prior);
  for (const auto& e : spec.effects) {
    const auto& s = e.spec;
    if (s.tau_free) {
      lp += log_gamma_density_on_log_scale(theta(k++),
                                           LogGammaPrior{s.tau_prior_shape, s.tau_prior_rate});
    }
    if (s.rho_sigma_free) {
      const double rho = std::exp(theta(k));
      const double sigma = std::exp(theta(k + 1));
      // PC density on (rho, sigma) plus the log-scale Jacobian rho * sigma
      lp += pc_prior_matern_logdensity(rho, sigma, s.pc_rho0, s.pc_sigma0) + theta(k) +
            theta(k + 1);
      k += 2;
    }
    if (s.a_free) {
      const double z = theta(k++);
      lp += -0.5 * std::log(2.0 * std::numbers::pi * s.a_prior_var) -
            (z - s.a_prior_mean) * (z - s.a_prior_mean) / (2.0 * s.a_prior_var);
    }
  }
  return lp;
}

ConditionalPosterior conditional_posterior(const LgmSpec& spec, const Eigen::VectorXd& theta,
                                           const Eigen::VectorXd& y) {
  Assembled a = assemble(spec, theta, y);
  return {std::move(a.mu), std::move(a.q_post), std::move(a.factor)};
}

double log_marginal_likelihood(const LgmSpec& spec, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& y) {
  return log_marginal_from(spec, assemble(spec, theta, y));
}

OptimizeResult optimize_hyper(const LgmSpec& spec, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& init, const FitOptions& opt) {
  const Eigen::VectorXd start = init.size() ? init : initial_theta(spec);
  if (start.size() != count_free(spec))
    throw std::invalid_argument("optimize_hyper: init has wrong length");

  auto objective = [&](const Eigen::VectorXd& theta) -> double {
    if (theta.lpNorm<Eigen::Infinity>() > theta_bound)
      return -std::numeric_limits<double>::infinity();
    try {
      return log_marginal_likelihood(spec, theta, y) + log_prior(spec, theta);
    } catch (const NotPositiveDefinite&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  const NelderMeadResult nm =
      nelder_mead_max(objective, start, opt.nm_step, opt.nm_tol, opt.nm_max_iter);
  if (!std::isfinite(nm.fx))
    throw std::runtime_error("optimize_hyper: every proposal was degenerate");
  return {nm.x, nm.fx, nm.iterations, nm.evaluations, nm.converged};
}

namespace {

bool extra_var_new_size_guard(const Eigen::VectorXd& extra, int n) {
  if (extra.size() == 0) return false;
  if (extra.size() != n) throw std::invalid_argument("predict: extra variance length mismatch");
  return true;
}

// linear-predictor summaries for design rows, mixing conditionals over the
// hyperparameter grid; means are reported at the mode (grid.front())
Prediction grid_prediction(const std::vector<HyperGridPoint>& grid,
                           const Eigen::SparseMatrix<double>& a,
                           const Eigen::VectorXd& offset, const Eigen::VectorXd& extra_var) {
  const int n = static_cast<int>(a.rows());
  const size_t g_count = grid.size();
  Prediction out;

  std::vector<Eigen::VectorXd> eta(g_count);
  for (size_t g = 0; g < g_count; ++g) {
    eta[g] = a * grid[g].mu;
    if (offset.size()) eta[g] += offset;
  }
  Eigen::VectorXd eta_bar = Eigen::VectorXd::Zero(n);
  for (size_t g = 0; g < g_count; ++g) eta_bar += grid[g].weight * eta[g];

  out.eta_mean = eta.front();
  out.eta_var = Eigen::VectorXd::Zero(n);
  out.pred_var = Eigen::VectorXd::Zero(n);
  const Eigen::SparseMatrix<double, Eigen::RowMajor> rows(a);
  Eigen::VectorXd rhs(a.cols());
  for (int i = 0; i < n; ++i) {
    rhs.setZero();
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rows, i); it; ++it)
      rhs(it.col()) = it.value();
    double var_acc = 0.0, pred_acc = 0.0;
    for (size_t g = 0; g < g_count; ++g) {
      const double cond_var = rhs.dot(grid[g].factor->solve(rhs));
      const double spread = eta[g](i) - eta_bar(i);
      var_acc += grid[g].weight * (cond_var + spread * spread);
      pred_acc += grid[g].weight * (cond_var + spread * spread + 1.0 / grid[g].tau_obs);
    }
    out.eta_var(i) = var_acc;
    out.pred_var(i) = pred_acc;
  }
  out.pred_mean = out.eta_mean;
  if (extra_var_new_size_guard(extra_var, n)) out.pred_var += extra_var;
  return out;
}

}  // namespace

LgmFit fit(const LgmSpec& spec, const Eigen::VectorXd& y, const Eigen::VectorXd& init,
           const FitOptions& opt) {
  LgmFit out;
  const OptimizeResult opt_res = optimize_hyper(spec, y, init, opt);
  out.theta_mode = opt_res.theta_mode;
  out.theta_names = hyper_names(spec);
  out.nm_iterations = opt_res.iterations;
  out.nm_evaluations = opt_res.evaluations;

  const Assembled a = assemble(spec, out.theta_mode, y);
  out.mu = a.mu;
  out.q_post = a.q_post;
  out.factor = a.factor;
  out.tau_obs_mode = materialize(spec, out.theta_mode).tau_obs;
  out.log_marginal = log_marginal_from(spec, a);

  const int n = spec.n_obs();
  if (spec.latent_dim() == 0) {
    out.eta_mean = spec.offset_or_zero();
    out.eta_var = Eigen::VectorXd::Zero(n);
    out.pred_mean = out.eta_mean;
    out.pred_var =
        out.eta_var + (1.0 / out.tau_obs_mode + spec.extra_var_or_zero().array()).matrix();
    out.fixed_start = spec.fixed_start();
    out.n_fixed = spec.n_fixed();
    return out;
  }

  out.grid.push_back({1.0, a.mu, a.factor, out.tau_obs_mode});
  if (opt.integrate_hyper && out.theta_mode.size() > 0) {
    auto log_post = [&](const Eigen::VectorXd& theta) {
      return log_marginal_likelihood(spec, theta, y) + log_prior(spec, theta);
    };
    const double lp0 = out.log_marginal + log_prior(spec, out.theta_mode);
    std::vector<double> lps = {lp0};
    const double h = 0.1;
    for (int g = 0; g < out.theta_mode.size(); ++g) {
      double sd = 0.3;
      try {
        Eigen::VectorXd up = out.theta_mode, dn = out.theta_mode;
        up(g) += h;
        dn(g) -= h;
        const double curv = (log_post(up) + log_post(dn) - 2.0 * lp0) / (h * h);
        if (curv < 0.0) sd = 1.0 / std::sqrt(-curv);
      } catch (const NotPositiveDefinite&) {
      }
      sd = std::clamp(sd, 0.05, 2.0);
      for (const double sign : {1.0, -1.0}) {
        Eigen::VectorXd theta_g = out.theta_mode;
        theta_g(g) += sign * opt.grid_z * sd;
        try {
          const Assembled ag = assemble(spec, theta_g, y);
          const double lp = log_marginal_from(spec, ag) + log_prior(spec, theta_g);
          if (!std::isfinite(lp)) continue;
          out.grid.push_back({0.0, ag.mu, ag.factor, materialize(spec, theta_g).tau_obs});
          lps.push_back(lp);
        } catch (const NotPositiveDefinite&) {
        }
      }
    }
    const double lp_max = *std::max_element(lps.begin(), lps.end());
    double total = 0.0;
    for (size_t g = 0; g < out.grid.size(); ++g) {
      out.grid[g].weight = std::exp(lps[g] - lp_max);
      total += out.grid[g].weight;
    }
    for (auto& p : out.grid) p.weight /= total;
  }

  // latent marginal variances, mixed over the grid
  {
    Eigen::VectorXd mu_bar = Eigen::VectorXd::Zero(spec.latent_dim());
    for (const auto& p : out.grid) mu_bar += p.weight * p.mu;
    out.latent_marginal_var = Eigen::VectorXd::Zero(spec.latent_dim());
    for (const auto& p : out.grid) {
      const Eigen::VectorXd cond = p.factor->marginal_variances();
      out.latent_marginal_var +=
          p.weight * (cond + (p.mu - mu_bar).cwiseAbs2()).eval();
    }
  }

  const Eigen::SparseMatrix<double> design = spec.design();
  const Prediction summaries =
      grid_prediction(out.grid, design, spec.offset_or_zero(), spec.extra_var_or_zero());
  out.eta_mean = summaries.eta_mean;
  out.eta_var = summaries.eta_var;
  out.pred_mean = summaries.pred_mean;
  out.pred_var = summaries.pred_var;

  for (size_t k = 0; k < spec.effects.size(); ++k)
    out.effect_ranges.emplace_back(spec.effect_start(static_cast<int>(k)),
                                   spec.effects[k].spec.size());
  out.fixed_start = spec.fixed_start();
  out.n_fixed = spec.n_fixed();
  return out;
}

Prediction predict(const LgmFit& fit, const Eigen::SparseMatrix<double>& a_new,
                   const Eigen::VectorXd& offset_new, const Eigen::VectorXd& extra_var_new) {
  if (a_new.cols() != fit.mu.size())
    throw std::invalid_argument("predict: design has wrong column count");
  if (fit.grid.empty()) {
    std::vector<HyperGridPoint> mode = {{1.0, fit.mu, fit.factor, fit.tau_obs_mode}};
    return grid_prediction(mode, a_new, offset_new, extra_var_new);
  }
  return grid_prediction(fit.grid, a_new, offset_new, extra_var_new);
}

}  // namespace inlarf
