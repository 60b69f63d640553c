#include "inlarf/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace inlarf {

namespace {

Eigen::VectorXd gather(const StDataset& data, std::span<const int> rows) {
  Eigen::VectorXd y(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) y(i) = data.rows[rows[i]].response;
  return y;
}

double rmse_of(const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
  return std::sqrt((y - pred).squaredNorm() / y.size());
}

// stopping statistic between consecutive fits; the conditional variant is
// averaged over the latent dimension so the threshold has a per-node meaning
double kld_between_fits(const LgmFit& prev, const LgmFit& next, KldVariant variant) {
  switch (variant) {
    case KldVariant::ConditionalMv:
      return kld_gaussian_mv(prev.mu, *prev.factor, next.mu, next.q_post, *next.factor) /
             static_cast<double>(prev.mu.size());
    case KldVariant::MarginalAvg:
      return kld_marginal_avg(prev.mu, prev.latent_marginal_var, next.mu,
                              next.latent_marginal_var);
    case KldVariant::MarginalMax:
      return kld_marginal_max(prev.mu, prev.latent_marginal_var, next.mu,
                              next.latent_marginal_var);
  }
  throw std::logic_error("kld_between_fits: unknown variant");
}

struct LatentState {  // posterior of the persistent latent field
  Eigen::VectorXd mu;
  SparseSymMatrix q;
  Eigen::VectorXd marginal_var;
};

LatentState state_without_block(const LgmFit& fit, int drop_start, int drop_len) {
  LatentState s;
  if (drop_len == 0) {
    s.mu = fit.mu;
    s.q = fit.q_post;
    s.marginal_var = fit.latent_marginal_var;
    return s;
  }
  const GaussianMarginal marg = marginalize_block(fit.mu, fit.q_post, drop_start, drop_len);
  s.mu = marg.mu;
  s.q = marg.q;
  const int keep = static_cast<int>(fit.mu.size()) - drop_len;
  s.marginal_var.resize(keep);
  for (int i = 0; i < drop_start; ++i) s.marginal_var(i) = fit.latent_marginal_var(i);
  for (int i = drop_start + drop_len; i < fit.mu.size(); ++i)
    s.marginal_var(i - drop_len) = fit.latent_marginal_var(i);
  return s;
}

double kld_between_states(const LatentState& prev, const LatentState& next, KldVariant variant) {
  switch (variant) {
    case KldVariant::ConditionalMv:
      return kld_gaussian_mv(prev.mu, prev.q, next.mu, next.q) /
             static_cast<double>(prev.mu.size());
    case KldVariant::MarginalAvg:
      return kld_marginal_avg(prev.mu, prev.marginal_var, next.mu, next.marginal_var);
    case KldVariant::MarginalMax:
      return kld_marginal_max(prev.mu, prev.marginal_var, next.mu, next.marginal_var);
  }
  throw std::logic_error("kld_between_states: unknown variant");
}

}  // namespace

std::vector<int> select_stress_points(const LgmFit& fit, int target_effect,
                                      StressSelection selection, int k,
                                      const Eigen::VectorXd& node_rmse) {
  const auto [start, size] = fit.effect_ranges.at(target_effect);
  if (k > size) throw std::invalid_argument("select_stress_points: k exceeds the effect size");

  Eigen::VectorXd scores;
  if (selection == StressSelection::LatentMarginalVariance) {
    scores = fit.latent_marginal_var.segment(start, size);
  } else {
    if (node_rmse.size() != size)
      throw std::invalid_argument("select_stress_points: per-node rmse scores required");
    scores = node_rmse;
  }

  std::vector<int> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return scores(a) != scores(b) ? scores(a) > scores(b) : a < b;
  });
  std::vector<int> out(idx.begin(), idx.begin() + k);
  std::sort(out.begin(), out.end());
  return out;
}

HybridResult run_inla_rf1(const StudyModel& model, const StDataset& data,
                          const ForestConfig& rf_cfg, const HybridConfig& cfg) {
  const std::vector<int> train = data.train_indices();
  const std::vector<int> all = data.all_indices();
  const Eigen::VectorXd y_train = gather(data, train);
  const int n_train = static_cast<int>(train.size());

  const LgmSpec spec = model.make_spec(data, train);
  const Eigen::SparseMatrix<double> design_all = model.make_design(data, all);
  const Eigen::MatrixXd x_rf_train = model.rf_features_full(data, train);
  const Eigen::MatrixXd x_rf_all = model.rf_features_full(data, all);

  FitOptions warm = model.fit_options;
  warm.nm_step = 0.1;

  HybridResult result;
  LgmFit current = fit(spec, y_train, Eigen::VectorXd(), model.fit_options);

  Eigen::VectorXd e_rf_train = Eigen::VectorXd::Zero(n_train);
  Eigen::VectorXd e_rf_all = Eigen::VectorXd::Zero(data.n());
  double sigma2 = 0.0;
  double d_kl = cfg.initial_d_kl;
  int i = 0;
  while (true) {
    if (d_kl < cfg.delta) {
      result.converged = true;
      break;
    }
    if (i > cfg.max_iter) break;
    if (i >= 1) {
      LgmSpec spec_i = spec;
      if (cfg.propagate_uncertainty)
        spec_i.extra_obs_variance = Eigen::VectorXd::Constant(n_train, sigma2);
      // the offset enters as a data shift; the refit posterior is identical
      LgmFit next = fit(spec_i, y_train - e_rf_train, current.theta_mode, warm);
      d_kl = kld_between_fits(current, next, cfg.kld_variant);
      current = std::move(next);
    }
    const Eigen::VectorXd resid = y_train - current.eta_mean;
    result.rf_last = fit_forest(x_rf_train, resid, rf_cfg);
    // training rows take their out-of-bag predictions; unseen rows take the
    // ensemble prediction
    e_rf_train = result.rf_last.oob_pred;
    e_rf_all = predict(result.rf_last, x_rf_all);
    for (int r = 0; r < n_train; ++r) e_rf_all(train[r]) = e_rf_train(r);
    sigma2 = result.rf_last.oob_mse;
    result.trace.push_back(
        {i, d_kl, sigma2, rmse_of(y_train, current.eta_mean + e_rf_train)});
    ++i;
  }
  result.iterations = i;
  result.sigma2_rf = sigma2;

  // final output: last STEP 1 plus the last forest correction as offset
  const Prediction p = predict(current, design_all);
  result.eta_mean = p.eta_mean + e_rf_all;
  result.eta_sd = p.eta_var.cwiseSqrt();
  Eigen::VectorXd interval_var = p.eta_var;
  if (cfg.propagate_uncertainty) interval_var.array() += sigma2;
  result.interval_sd = interval_var.cwiseSqrt();
  result.pred_mean = result.eta_mean;
  Eigen::VectorXd pred_var = interval_var.array() + 1.0 / current.tau_obs_mode;
  result.pred_sd = pred_var.cwiseSqrt();
  result.final_fit = std::move(current);
  return result;
}

HybridResult run_inla_rf2(const StudyModel& model, const StDataset& data,
                          const ForestConfig& rf_cfg, const HybridConfig& cfg) {
  const std::vector<int> train = data.train_indices();
  const std::vector<int> all = data.all_indices();
  const Eigen::VectorXd y_train = gather(data, train);
  const int n_train = static_cast<int>(train.size());

  const LgmSpec spec0 = model.make_spec(data, train);
  const Eigen::SparseMatrix<double> design_all = model.make_design(data, all);
  const int fixed_start0 = spec0.fixed_start();
  const int n_fixed = spec0.n_fixed();

  FitOptions warm = model.fit_options;
  warm.nm_step = 0.1;

  HybridResult result;
  LgmFit base = fit(spec0, y_train, Eigen::VectorXd(), model.fit_options);
  {
    const Prediction pb = predict(base, design_all);
    result.base_eta_mean = pb.eta_mean;
    result.base_eta_sd = pb.eta_var.cwiseSqrt();
  }

  // per-node scores for the linear-predictor criterion
  Eigen::VectorXd node_rmse;
  if (cfg.selection == StressSelection::LinearPredictorRmse) {
    const auto [tstart, tsize] = base.effect_ranges.at(model.target_effect);
    (void)tstart;
    Eigen::VectorXd se = Eigen::VectorXd::Zero(tsize);
    Eigen::VectorXi cnt = Eigen::VectorXi::Zero(tsize);
    for (int i = 0; i < n_train; ++i) {
      const int node = model.row_node(data.rows[train[i]]);
      const double err = y_train(i) - base.eta_mean(i);
      se(node) += err * err;
      cnt(node) += 1;
    }
    node_rmse.resize(tsize);
    for (int j = 0; j < tsize; ++j) node_rmse(j) = cnt(j) > 0 ? std::sqrt(se(j) / cnt(j)) : 0.0;
  }
  result.stress_nodes =
      select_stress_points(base, model.target_effect, cfg.selection, cfg.k_stress, node_rmse);
  const int k = static_cast<int>(result.stress_nodes.size());

  std::vector<int> slot_of_node;  // effect node -> stress slot or -1
  {
    const auto [tstart, tsize] = base.effect_ranges.at(model.target_effect);
    (void)tstart;
    slot_of_node.assign(tsize, -1);
    for (int s = 0; s < k; ++s) slot_of_node[result.stress_nodes[s]] = s;
  }
  auto row_slot = [&](const StRow& r) {
    const int node = model.row_node(r);
    return node >= 0 && node < static_cast<int>(slot_of_node.size()) ? slot_of_node[node] : -1;
  };

  auto correction_block = [&](std::span<const int> rows) {
    std::vector<Eigen::Triplet<double>> tr;
    for (size_t i = 0; i < rows.size(); ++i) {
      const int slot = row_slot(data.rows[rows[i]]);
      if (slot >= 0) tr.emplace_back(static_cast<int>(i), slot, 1.0);
    }
    Eigen::SparseMatrix<double> a(static_cast<int>(rows.size()), k);
    a.setFromTriplets(tr.begin(), tr.end());
    return a;
  };
  const Eigen::SparseMatrix<double> a_c_train = correction_block(train);
  const Eigen::SparseMatrix<double> a_c_all = correction_block(all);

  result.stress_rows.assign(k, -1);
  for (int r = 0; r < data.n(); ++r) {
    const int slot = row_slot(data.rows[r]);
    if (slot >= 0 && result.stress_rows[slot] < 0) result.stress_rows[slot] = r;
  }

  const Eigen::MatrixXd x_rf_train = model.rf_features_minimal(data, train);
  const Eigen::MatrixXd x_rf_nodes = model.target_node_features(result.stress_nodes);

  Eigen::VectorXd mu_c = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd e_rf_stress = Eigen::VectorXd::Zero(k);
  double tau_c = 0.0;
  double sigma2 = 0.0;

  // the correction effect enters the model from the first update on;
  // iteration 0 is served by the base fit
  const int corr_start = fixed_start0;
  LgmFit current = base;
  LatentState prev_state = state_without_block(current, 0, 0);
  bool extended = false;

  double d_kl = cfg.initial_d_kl;
  int i = 0;
  while (true) {
    if (d_kl < cfg.delta) {
      result.converged = true;
      break;
    }
    if (i > cfg.max_iter) break;
    if (i >= 1) {
      mu_c += e_rf_stress;
      tau_c = 1.0 / std::max(sigma2, 1e-12);
      LgmSpec spec_i = spec0;
      Effect corr;
      corr.spec.family = EffectFamily::Iid;
      corr.spec.n = k;
      corr.spec.tau = tau_c;
      corr.a_block = a_c_train;
      spec_i.effects.push_back(std::move(corr));
      // the nonzero correction mean enters through the offset at stress rows
      spec_i.offset = spec0.offset_or_zero() + a_c_train * mu_c;
      LgmFit next = fit(spec_i, y_train, current.theta_mode, warm);
      extended = true;
      const LatentState next_state = state_without_block(next, corr_start, k);
      d_kl = kld_between_states(prev_state, next_state, cfg.kld_variant);
      prev_state = next_state;
      current = std::move(next);
    }
    const Eigen::VectorXd resid = y_train - current.eta_mean;
    result.rf_last = fit_forest(x_rf_train, resid, rf_cfg);
    // ensemble predictions at the node locations: each pass recovers part
    // of the remaining bias there, and the mu_c accumulation sums them up;
    // the propagated variance stays the honest out-of-bag error
    e_rf_stress = predict(result.rf_last, x_rf_nodes);
    sigma2 = result.rf_last.oob_mse;
    result.trace.push_back({i, d_kl, sigma2, rmse_of(y_train, current.eta_mean)});
    ++i;
  }
  result.iterations = i;
  result.sigma2_rf = sigma2;
  result.mu_c = mu_c;
  result.tau_c = tau_c;

  // summaries at every dataset row from the last STEP 1
  if (extended) {
    // splice the correction block into the base design: [effects, A_c, fixed]
    std::vector<Eigen::Triplet<double>> tr;
    for (int kk = 0; kk < design_all.outerSize(); ++kk)
      for (Eigen::SparseMatrix<double>::InnerIterator it(design_all, kk); it; ++it) {
        const int col = static_cast<int>(it.col());
        tr.emplace_back(static_cast<int>(it.row()), col < fixed_start0 ? col : col + k,
                        it.value());
      }
    for (int kk = 0; kk < a_c_all.outerSize(); ++kk)
      for (Eigen::SparseMatrix<double>::InnerIterator it(a_c_all, kk); it; ++it)
        tr.emplace_back(static_cast<int>(it.row()), fixed_start0 + static_cast<int>(it.col()),
                        it.value());
    Eigen::SparseMatrix<double> design_ext(data.n(), fixed_start0 + k + n_fixed);
    design_ext.setFromTriplets(tr.begin(), tr.end());
    const Prediction p = predict(current, design_ext, a_c_all * mu_c);
    result.eta_mean = p.eta_mean;
    result.eta_sd = p.eta_var.cwiseSqrt();
    result.pred_mean = p.pred_mean;
    result.pred_sd = p.pred_var.cwiseSqrt();
  } else {
    result.eta_mean = result.base_eta_mean;
    result.eta_sd = result.base_eta_sd;
    result.pred_mean = result.base_eta_mean;
    result.pred_sd =
        (result.base_eta_sd.array().square() + 1.0 / current.tau_obs_mode).sqrt();
  }
  result.interval_sd = result.eta_sd;
  result.final_fit = std::move(current);
  return result;
}

}  // namespace inlarf
