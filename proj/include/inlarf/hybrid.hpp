#pragma once

#include "inlarf/forest.hpp"
#include "inlarf/kld.hpp"
#include "inlarf/lgm.hpp"
#include "inlarf/models.hpp"

#include <vector>

namespace inlarf {

enum class HybridAlgorithm { Rf1, Rf2 };
enum class KldVariant { ConditionalMv, MarginalAvg, MarginalMax };
enum class StressSelection { LatentMarginalVariance, LinearPredictorRmse };

struct HybridConfig {
  HybridAlgorithm algorithm = HybridAlgorithm::Rf1;
  bool propagate_uncertainty = false;  // Rf1 only
  double delta = 0.01;
  int max_iter = 30;
  double initial_d_kl = 10.0;
  KldVariant kld_variant = KldVariant::ConditionalMv;
  int k_stress = 100;  // Rf2
  StressSelection selection = StressSelection::LatentMarginalVariance;
};

struct IterationRecord {
  int iter = 0;
  double d_kl = 0.0;
  double sigma2_rf = 0.0;
  double train_rmse = 0.0;
};

struct HybridResult {
  LgmFit final_fit;  // last STEP 1
  std::vector<IterationRecord> trace;
  ForestFit rf_last;
  double sigma2_rf = 0.0;
  bool converged = false;
  int iterations = 0;  // correction iterations executed

  // composed summaries for every dataset row
  Eigen::VectorXd pred_mean, pred_sd;  // response level (adds observation noise)
  Eigen::VectorXd eta_mean, eta_sd;    // linear-predictor level
  /// interval width used for coverage scoring: the linear-predictor sd,
  /// widened by the forest's out-of-bag variance under propagation
  Eigen::VectorXd interval_sd;

  // node correction (Rf2)
  std::vector<int> stress_nodes;  // effect-local indices, ascending
  std::vector<int> stress_rows;   // one representative dataset row per stress node (-1 if none)
  Eigen::VectorXd mu_c;
  double tau_c = 0.0;
  Eigen::VectorXd base_eta_mean, base_eta_sd;  // benchmark fit at every row
};

/// Top-k nodes of the target effect by the configured criterion; ties break
/// toward the lower node index. The RMSE criterion needs per-node scores
/// computed from the data (pass them in node_rmse).
std::vector<int> select_stress_points(const LgmFit& fit, int target_effect,
                                      StressSelection selection, int k,
                                      const Eigen::VectorXd& node_rmse = Eigen::VectorXd());

/// Offset-correction hybrid: alternates the latent model with a residual
/// forest, feeding forest predictions back as an offset, optionally
/// propagating the forest's out-of-bag variance into the likelihood.
HybridResult run_inla_rf1(const StudyModel& model, const StDataset& data,
                          const ForestConfig& rf_cfg, const HybridConfig& cfg);

/// Node-correction hybrid: selects stress points from a base fit, then
/// iterates an extended model whose extra IID effect absorbs forest
/// corrections at those nodes.
HybridResult run_inla_rf2(const StudyModel& model, const StDataset& data,
                          const ForestConfig& rf_cfg, const HybridConfig& cfg);

}  // namespace inlarf
