#include "inlarf/hybrid.hpp"
#include "inlarf/metrics.hpp"
#include "inlarf/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace inlarf;

namespace {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

void check_keys(const json& obj, const std::string& section,
                const std::vector<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in " + section);
  }
}

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = "out";
  std::string study = "spatiotemporal";

  StSimConfig st_sim;
  TemporalSimConfig temporal_sim;
  StModelConfig st_model;
  TemporalModelConfig temporal_model;
  HybridConfig hybrid;
  ForestConfig rf;
  int cv_temporal_groups = 2;
  int cv_k_spatial = 3;
};

double num(const json& j) { return j.get<double>(); }

void apply_simulation_overrides(RunConfig& cfg, const json& o) {
  check_keys(o, "simulation.overrides",
             {"n_per_time", "t_len", "gamma1", "gamma2", "gamma3", "sigma2_spatial", "rho",
              "sigma2_eps", "a", "domain_side", "train_fraction", "linear_signal", "linear_b1",
              "linear_b2", "n", "k_jumps", "segment", "beta0", "pi_s", "mu_wj", "tau_l",
              "tau_wj", "tau_ur"});
  StSimConfig& s = cfg.st_sim;
  TemporalSimConfig& t = cfg.temporal_sim;
  if (o.contains("n_per_time")) s.n_per_time = o["n_per_time"].get<int>();
  if (o.contains("t_len")) s.t_len = o["t_len"].get<int>();
  if (o.contains("gamma1")) s.gamma1 = num(o["gamma1"]);
  if (o.contains("gamma2")) s.gamma2 = num(o["gamma2"]);
  if (o.contains("gamma3")) s.gamma3 = num(o["gamma3"]);
  if (o.contains("sigma2_spatial")) s.sigma2_spatial = num(o["sigma2_spatial"]);
  if (o.contains("rho")) s.rho = num(o["rho"]);
  if (o.contains("sigma2_eps")) s.sigma2_eps = num(o["sigma2_eps"]);
  if (o.contains("a")) s.a = num(o["a"]);
  if (o.contains("domain_side")) s.domain_side = num(o["domain_side"]);
  if (o.contains("train_fraction")) s.train_fraction = num(o["train_fraction"]);
  if (o.contains("linear_signal")) s.linear_signal = o["linear_signal"].get<bool>();
  if (o.contains("linear_b1")) s.linear_b1 = num(o["linear_b1"]);
  if (o.contains("linear_b2")) s.linear_b2 = num(o["linear_b2"]);
  if (o.contains("n")) t.n = o["n"].get<int>();
  if (o.contains("k_jumps")) t.k_jumps = o["k_jumps"].get<int>();
  if (o.contains("segment")) t.segment = o["segment"].get<int>();
  if (o.contains("beta0")) t.beta0 = num(o["beta0"]);
  if (o.contains("pi_s")) t.pi_s = num(o["pi_s"]);
  if (o.contains("mu_wj")) t.mu_wj = num(o["mu_wj"]);
  if (o.contains("tau_l")) t.tau_l = num(o["tau_l"]);
  if (o.contains("tau_wj")) t.tau_wj = num(o["tau_wj"]);
  if (o.contains("tau_ur")) t.tau_ur = num(o["tau_ur"]);
}

RunConfig load_config(const std::optional<std::string>& path) {
  RunConfig cfg;
  json j = json::object();
  if (path) {
    std::ifstream is(*path);
    if (!is) throw ConfigError("cannot open config file " + *path);
    try {
      j = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
  }
  check_keys(j, "config",
             {"schema_version", "seed", "threads", "output", "simulation", "model", "hybrid",
              "rf", "cv"});
  if (path && !j.contains("schema_version")) throw ConfigError("config is missing schema_version");
  if (j.contains("schema_version") && j["schema_version"].get<int>() != 1)
    throw ConfigError("unsupported schema_version");
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  if (j.contains("output")) {
    check_keys(j["output"], "output", {"dir"});
    if (j["output"].contains("dir")) cfg.out_dir = j["output"]["dir"].get<std::string>();
  }
  if (j.contains("simulation")) {
    check_keys(j["simulation"], "simulation", {"study", "overrides"});
    if (j["simulation"].contains("study")) cfg.study = j["simulation"]["study"].get<std::string>();
    if (j["simulation"].contains("overrides"))
      apply_simulation_overrides(cfg, j["simulation"]["overrides"]);
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, "model",
               {"mesh_nx", "mesh_ny", "mesh_margin", "pc_rho0", "pc_sigma0", "a_prior_var",
                "fixed_prec", "integrate_hyper"});
    if (m.contains("mesh_nx")) cfg.st_model.mesh_nx = m["mesh_nx"].get<int>();
    if (m.contains("mesh_ny")) cfg.st_model.mesh_ny = m["mesh_ny"].get<int>();
    if (m.contains("mesh_margin")) cfg.st_model.mesh_margin = num(m["mesh_margin"]);
    if (m.contains("pc_rho0")) cfg.st_model.pc_rho0 = num(m["pc_rho0"]);
    if (m.contains("pc_sigma0")) cfg.st_model.pc_sigma0 = num(m["pc_sigma0"]);
    if (m.contains("a_prior_var")) cfg.st_model.a_prior_var = num(m["a_prior_var"]);
    if (m.contains("fixed_prec")) {
      cfg.st_model.fixed_prec = num(m["fixed_prec"]);
      cfg.temporal_model.fixed_prec = num(m["fixed_prec"]);
    }
    if (m.contains("integrate_hyper"))
      cfg.temporal_model.integrate_hyper = m["integrate_hyper"].get<bool>();
  }
  if (j.contains("hybrid")) {
    const json& h = j["hybrid"];
    check_keys(h, "hybrid",
               {"algorithm", "propagate_uncertainty", "delta", "max_iter", "kld_variant",
                "k_stress", "selection"});
    if (h.contains("algorithm")) {
      const std::string a = h["algorithm"].get<std::string>();
      if (a == "rf1")
        cfg.hybrid.algorithm = HybridAlgorithm::Rf1;
      else if (a == "rf2")
        cfg.hybrid.algorithm = HybridAlgorithm::Rf2;
      else
        throw ConfigError("hybrid.algorithm must be rf1 or rf2");
    }
    if (h.contains("propagate_uncertainty"))
      cfg.hybrid.propagate_uncertainty = h["propagate_uncertainty"].get<bool>();
    if (h.contains("delta")) cfg.hybrid.delta = num(h["delta"]);
    if (h.contains("max_iter")) cfg.hybrid.max_iter = h["max_iter"].get<int>();
    if (h.contains("kld_variant")) {
      const std::string v = h["kld_variant"].get<std::string>();
      if (v == "conditional_mv")
        cfg.hybrid.kld_variant = KldVariant::ConditionalMv;
      else if (v == "marginal_avg")
        cfg.hybrid.kld_variant = KldVariant::MarginalAvg;
      else if (v == "marginal_max")
        cfg.hybrid.kld_variant = KldVariant::MarginalMax;
      else
        throw ConfigError("hybrid.kld_variant is invalid");
    }
    if (h.contains("k_stress")) cfg.hybrid.k_stress = h["k_stress"].get<int>();
    if (h.contains("selection")) {
      const std::string s = h["selection"].get<std::string>();
      if (s == "latent_marginal_variance")
        cfg.hybrid.selection = StressSelection::LatentMarginalVariance;
      else if (s == "linear_predictor_rmse")
        cfg.hybrid.selection = StressSelection::LinearPredictorRmse;
      else
        throw ConfigError("hybrid.selection is invalid");
    }
  }
  if (j.contains("rf")) {
    const json& r = j["rf"];
    check_keys(r, "rf", {"n_trees", "mtry", "min_leaf", "max_depth"});
    if (r.contains("n_trees")) cfg.rf.n_trees = r["n_trees"].get<int>();
    if (r.contains("mtry")) cfg.rf.mtry = r["mtry"].get<int>();
    if (r.contains("min_leaf")) cfg.rf.min_leaf = r["min_leaf"].get<int>();
    if (r.contains("max_depth")) cfg.rf.max_depth = r["max_depth"].get<int>();
  }
  if (j.contains("cv")) {
    const json& c = j["cv"];
    check_keys(c, "cv", {"temporal_groups", "k_spatial"});
    if (c.contains("temporal_groups")) cfg.cv_temporal_groups = c["temporal_groups"].get<int>();
    if (c.contains("k_spatial")) cfg.cv_k_spatial = c["k_spatial"].get<int>();
  }
  return cfg;
}

json config_echo(const RunConfig& cfg) {
  json j;
  j["schema_version"] = 1;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["output"] = {{"dir", cfg.out_dir}};
  j["simulation"]["study"] = cfg.study;
  if (cfg.study == "temporal-jumps") {
    const TemporalSimConfig& t = cfg.temporal_sim;
    j["simulation"]["overrides"] = {
        {"n", t.n},         {"k_jumps", t.k_jumps}, {"segment", t.segment},
        {"beta0", t.beta0}, {"pi_s", t.pi_s},       {"mu_wj", t.mu_wj},
        {"tau_l", t.tau_l}, {"tau_wj", t.tau_wj},   {"tau_ur", t.tau_ur}};
  } else {
    const StSimConfig& s = cfg.st_sim;
    j["simulation"]["overrides"] = {{"n_per_time", s.n_per_time},
                                    {"t_len", s.t_len},
                                    {"gamma1", s.gamma1},
                                    {"gamma2", s.gamma2},
                                    {"gamma3", s.gamma3},
                                    {"sigma2_spatial", s.sigma2_spatial},
                                    {"rho", s.rho},
                                    {"sigma2_eps", s.sigma2_eps},
                                    {"a", s.a},
                                    {"domain_side", s.side()},
                                    {"train_fraction", s.train_fraction},
                                    {"linear_signal", s.linear_signal},
                                    {"linear_b1", s.linear_b1},
                                    {"linear_b2", s.linear_b2}};
  }
  j["model"] = {{"mesh_nx", cfg.st_model.mesh_nx},
                {"mesh_ny", cfg.st_model.mesh_ny},
                {"mesh_margin", cfg.st_model.mesh_margin},
                {"pc_rho0", cfg.st_model.pc_rho0},
                {"pc_sigma0", cfg.st_model.pc_sigma0},
                {"a_prior_var", cfg.st_model.a_prior_var},
                {"fixed_prec", cfg.st_model.fixed_prec},
                {"integrate_hyper", cfg.temporal_model.integrate_hyper}};
  j["hybrid"] = {{"algorithm", cfg.hybrid.algorithm == HybridAlgorithm::Rf1 ? "rf1" : "rf2"},
                 {"propagate_uncertainty", cfg.hybrid.propagate_uncertainty},
                 {"delta", cfg.hybrid.delta},
                 {"max_iter", cfg.hybrid.max_iter},
                 {"kld_variant", cfg.hybrid.kld_variant == KldVariant::ConditionalMv
                                     ? "conditional_mv"
                                     : (cfg.hybrid.kld_variant == KldVariant::MarginalAvg
                                            ? "marginal_avg"
                                            : "marginal_max")},
                 {"k_stress", cfg.hybrid.k_stress},
                 {"selection", cfg.hybrid.selection == StressSelection::LatentMarginalVariance
                                   ? "latent_marginal_variance"
                                   : "linear_predictor_rmse"}};
  j["rf"] = {{"n_trees", cfg.rf.n_trees},
             {"mtry", cfg.rf.mtry},
             {"min_leaf", cfg.rf.min_leaf},
             {"max_depth", cfg.rf.max_depth}};
  j["cv"] = {{"temporal_groups", cfg.cv_temporal_groups}, {"k_spatial", cfg.cv_k_spatial}};
  return j;
}

void write_provenance(const RunConfig& cfg, const std::string& command,
                      const std::string& data_path) {
  json p;
  p["command"] = command;
  p["generator_version"] = 1;
  p["seed"] = cfg.seed;
  p["sub_seeds"] = {{"data", derive_seed(cfg.seed, "data")},
                    {"rf", derive_seed(cfg.seed, "rf")},
                    {"kmeans", derive_seed(cfg.seed, "kmeans")}};
  if (!data_path.empty()) p["data"] = data_path;
  p["config"] = config_echo(cfg);
  std::ofstream os(fs::path(cfg.out_dir) / "provenance.json");
  os << p.dump(2) << "\n";
}

StudyModel build_model(const RunConfig& cfg, const StDataset& ds) {
  if (cfg.study == "temporal-jumps") return make_temporal_model(ds, cfg.temporal_model);
  return make_st_model(ds, cfg.st_model);
}

Eigen::VectorXd gather_rows(const StDataset& ds, std::span<const int> rows, auto&& field) {
  Eigen::VectorXd v(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) v(i) = field(ds.rows[rows[i]]);
  return v;
}

MetricReport eval_rows(const StDataset& ds, std::span<const int> rows,
                       const Eigen::VectorXd& mean_all, const Eigen::VectorXd& sd_all,
                       bool against_truth = false) {
  Eigen::VectorXd y(rows.size()), m(rows.size()), s(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    y(i) = against_truth ? ds.rows[rows[i]].eta_true : ds.rows[rows[i]].response;
    m(i) = mean_all(rows[i]);
    s(i) = sd_all(rows[i]);
  }
  return evaluate(y, m, s);
}

void write_predictive_csv(const std::string& path, const Eigen::VectorXd& mean,
                          const Eigen::VectorXd& sd) {
  std::ofstream os(path);
  os.precision(10);
  os << "row,mean,sd\n";
  for (int i = 0; i < mean.size(); ++i) os << i << "," << mean(i) << "," << sd(i) << "\n";
}

int cmd_simulate(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const std::uint64_t data_seed = derive_seed(cfg.seed, "data");
  StDataset ds;
  if (cfg.study == "spatiotemporal")
    ds = simulate_spatiotemporal(cfg.st_sim, data_seed);
  else
    ds = simulate_temporal_jumps(cfg.temporal_sim, data_seed);
  const std::string path = (fs::path(cfg.out_dir) / "dataset.csv").string();
  write_dataset_csv_file(ds, path);
  write_provenance(cfg, "simulate", path);
  std::cout << "wrote " << path << " (" << ds.n() << " rows)\n";
  return 0;
}

int cmd_fit(const RunConfig& cfg, const std::string& data_path,
            const std::optional<std::string>& warm_start) {
  fs::create_directories(cfg.out_dir);
  const StDataset ds = read_dataset_csv_file(data_path);
  const StudyModel model = build_model(cfg, ds);
  const auto train = ds.train_indices();
  const auto test = ds.test_indices();
  const Eigen::VectorXd y = gather_rows(ds, train, [](const StRow& r) { return r.response; });

  Eigen::VectorXd init;
  if (warm_start) {
    std::ifstream is(*warm_start);
    if (!is) throw ConfigError("cannot open warm-start file " + *warm_start);
    const json t = json::parse(is);
    const auto vals = t.at("values").get<std::vector<double>>();
    init = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<int>(vals.size()));
  }

  FitOptions opt = model.fit_options;
  if (warm_start) opt.nm_step = 0.05;
  const LgmFit f = fit(model.make_spec(ds, train), y, init, opt);

  json theta;
  theta["names"] = f.theta_names;
  theta["values"] =
      std::vector<double>(f.theta_mode.data(), f.theta_mode.data() + f.theta_mode.size());
  theta["nm_iterations"] = f.nm_iterations;
  theta["nm_evaluations"] = f.nm_evaluations;
  theta["log_marginal"] = f.log_marginal;
  std::ofstream(fs::path(cfg.out_dir) / "theta.json") << theta.dump(2) << "\n";

  {
    std::ofstream os(fs::path(cfg.out_dir) / "latent.csv");
    os.precision(10);
    os << "node,mean,sd\n";
    for (int i = 0; i < f.mu.size(); ++i)
      os << i << "," << f.mu(i) << "," << std::sqrt(f.latent_marginal_var(i)) << "\n";
  }

  const Prediction all = predict(f, model.make_design(ds, ds.all_indices()));
  write_predictive_csv((fs::path(cfg.out_dir) / "predictive.csv").string(), all.pred_mean,
                       all.pred_var.cwiseSqrt());

  std::vector<MetricCsvRow> rows;
  const Eigen::VectorXd eta_sd = all.eta_var.cwiseSqrt();
  rows.push_back({"0", "train", eval_rows(ds, train, all.eta_mean, eta_sd)});
  if (!test.empty()) rows.push_back({"0", "test", eval_rows(ds, test, all.eta_mean, eta_sd)});
  std::ofstream os(fs::path(cfg.out_dir) / "metrics.csv");
  write_metric_csv(rows, os);
  write_provenance(cfg, "fit", data_path);
  std::cout << "fit done: " << f.nm_iterations
            << " optimizer iterations, log_marginal=" << f.log_marginal << "\n";
  return 0;
}

int cmd_hybrid(const RunConfig& cfg, const std::string& data_path) {
  fs::create_directories(cfg.out_dir);
  const StDataset ds = read_dataset_csv_file(data_path);
  const StudyModel model = build_model(cfg, ds);
  ForestConfig rf = cfg.rf;
  rf.seed = derive_seed(cfg.seed, "rf");
  rf.n_threads = cfg.threads;

  const HybridResult res = cfg.hybrid.algorithm == HybridAlgorithm::Rf1
                               ? run_inla_rf1(model, ds, rf, cfg.hybrid)
                               : run_inla_rf2(model, ds, rf, cfg.hybrid);

  {
    std::ofstream os(fs::path(cfg.out_dir) / "trace.csv");
    os.precision(10);
    os << "iter,d_kl,sigma2_rf,train_rmse\n";
    for (const auto& t : res.trace)
      os << t.iter << "," << t.d_kl << "," << t.sigma2_rf << "," << t.train_rmse << "\n";
  }
  write_predictive_csv((fs::path(cfg.out_dir) / "predictive.csv").string(), res.pred_mean,
                       res.pred_sd);

  std::vector<MetricCsvRow> rows;
  if (cfg.hybrid.algorithm == HybridAlgorithm::Rf1) {
    const auto train = ds.train_indices();
    const auto test = ds.test_indices();
    rows.push_back({"0", "train", eval_rows(ds, train, res.eta_mean, res.interval_sd)});
    if (!test.empty())
      rows.push_back({"0", "test", eval_rows(ds, test, res.eta_mean, res.interval_sd)});
  } else {
    // latent-level scores against the retained truth, full data and stress set
    const auto all = ds.all_indices();
    std::vector<int> stress_rows;
    for (int r : res.stress_rows)
      if (r >= 0) stress_rows.push_back(r);
    rows.push_back({"0", "full", eval_rows(ds, all, res.eta_mean, res.eta_sd, true)});
    rows.push_back({"0", "stress", eval_rows(ds, stress_rows, res.eta_mean, res.eta_sd, true)});
    rows.push_back({"base", "full", eval_rows(ds, all, res.base_eta_mean, res.base_eta_sd, true)});
    rows.push_back(
        {"base", "stress", eval_rows(ds, stress_rows, res.base_eta_mean, res.base_eta_sd, true)});

    std::ofstream os(fs::path(cfg.out_dir) / "stress.csv");
    os.precision(10);
    os << "node,base_mean,base_sd,corrected_mean,corrected_sd,truth\n";
    for (size_t s = 0; s < res.stress_nodes.size(); ++s) {
      const int r = res.stress_rows[s];
      if (r < 0) continue;
      os << res.stress_nodes[s] << "," << res.base_eta_mean(r) << "," << res.base_eta_sd(r)
         << "," << res.eta_mean(r) << "," << res.eta_sd(r) << "," << ds.rows[r].eta_true << "\n";
    }
  }
  std::ofstream os(fs::path(cfg.out_dir) / "metrics.csv");
  write_metric_csv(rows, os);
  write_provenance(cfg, "hybrid", data_path);

  if (!res.converged)
    std::cerr << "warning: stopping threshold not reached within max_iter; results written\n";
  std::cout << "hybrid done: " << res.iterations
            << " iterations, final d_kl=" << res.trace.back().d_kl
            << (res.converged ? " (converged)" : " (cap reached)") << "\n";
  return 0;
}

int cmd_cv(const RunConfig& cfg, const std::string& data_path) {
  fs::create_directories(cfg.out_dir);
  const StDataset ds = read_dataset_csv_file(data_path);
  const auto groups = contiguous_temporal_groups(ds.t_len, cfg.cv_temporal_groups);
  const BlockAssignment blocks =
      st_blocks(ds, groups, cfg.cv_k_spatial, derive_seed(cfg.seed, "kmeans"));

  ForestConfig rf = cfg.rf;
  rf.seed = derive_seed(cfg.seed, "rf");
  rf.n_threads = cfg.threads;

  auto with_split = [&](std::span<const int> train, std::span<const int> test) {
    StDataset fold = ds;
    for (int r : train) fold.rows[r].split = Split::Train;
    for (int r : test) fold.rows[r].split = Split::Test;
    return fold;
  };

  const StudyModel model = build_model(cfg, ds);
  ModelRunner run_base = [&](std::span<const int> train, std::span<const int> test) {
    const StDataset fold = with_split(train, test);
    const Eigen::VectorXd y = gather_rows(fold, train, [](const StRow& r) { return r.response; });
    const LgmFit f = fit(model.make_spec(fold, train), y, Eigen::VectorXd(), model.fit_options);
    const Prediction p = predict(f, model.make_design(fold, fold.all_indices()));
    return std::make_pair(p.eta_mean, p.eta_var.cwiseSqrt().eval());
  };
  auto make_rf1_runner = [&](bool propagate) {
    return ModelRunner([&, propagate](std::span<const int> train, std::span<const int> test) {
      const StDataset fold = with_split(train, test);
      HybridConfig h = cfg.hybrid;
      h.algorithm = HybridAlgorithm::Rf1;
      h.propagate_uncertainty = propagate;
      const HybridResult r = run_inla_rf1(model, fold, rf, h);
      return std::make_pair(r.eta_mean, r.interval_sd);
    });
  };

  const std::vector<std::pair<std::string, ModelRunner>> runners = {
      {"INLA", run_base},
      {"INLA-RF1.1", make_rf1_runner(false)},
      {"INLA-RF1.2", make_rf1_runner(true)}};

  std::ofstream os(fs::path(cfg.out_dir) / "cv.csv");
  os.precision(10);
  os << "model,block,split,metric,value\n";
  auto emit = [&](const std::string& m, const std::string& b, const std::string& s,
                  const MetricReport& r) {
    os << m << "," << b << "," << s << ",rmse," << r.rmse << "\n";
    os << m << "," << b << "," << s << ",mae," << r.mae << "\n";
    os << m << "," << b << "," << s << ",cp," << r.cp << "\n";
    os << m << "," << b << "," << s << ",aiw," << r.aiw << "\n";
  };
  for (const auto& [name, runner] : runners) {
    const CvReport rep = cv_run(ds, blocks, runner);
    for (const auto& fold : rep.folds) {
      emit(name, std::to_string(fold.block), "train", fold.train);
      emit(name, std::to_string(fold.block), "test", fold.test);
    }
    emit(name, "mean", "train", rep.mean_train);
    emit(name, "mean", "test", rep.mean_test);
    std::cout << name << " cv mean test rmse=" << rep.mean_test.rmse << "\n";
  }
  write_provenance(cfg, "cv", data_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid spatio-temporal inference: latent Gaussian models with "
               "iterative random-forest residual correction"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed_flag;
  std::optional<std::string> out_flag;
  std::optional<int> threads_flag;
  std::optional<std::string> study_flag;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--seed", seed_flag, "master seed (overrides config)");
  app.add_option("--out", out_flag, "output directory (overrides config)");
  app.add_option("--threads", threads_flag, "worker threads for forest fitting");

  auto* sim = app.add_subcommand("simulate", "generate a study dataset");
  sim->add_option("--study", study_flag, "spatiotemporal | temporal-jumps");

  auto* fit_cmd = app.add_subcommand("fit", "fit the base latent model");
  std::string fit_data;
  std::optional<std::string> warm_start;
  fit_cmd->add_option("--data", fit_data, "dataset csv")->required();
  fit_cmd->add_option("--study", study_flag, "spatiotemporal | temporal-jumps");
  fit_cmd->add_option("--warm-start", warm_start, "theta.json from a previous fit");

  auto* hybrid_cmd = app.add_subcommand("hybrid", "run an iterative hybrid algorithm");
  std::string hybrid_data;
  std::optional<std::string> algo_flag;
  bool propagate_flag = false;
  hybrid_cmd->add_option("--data", hybrid_data, "dataset csv")->required();
  hybrid_cmd->add_option("--study", study_flag, "spatiotemporal | temporal-jumps");
  hybrid_cmd->add_option("--algorithm", algo_flag, "rf1 | rf2");
  hybrid_cmd->add_flag("--propagate", propagate_flag, "propagate forest uncertainty (rf1)");

  auto* cv_cmd = app.add_subcommand("cv", "structured spatio-temporal cross-validation");
  std::string cv_data;
  std::optional<int> groups_flag, kspatial_flag;
  cv_cmd->add_option("--data", cv_data, "dataset csv")->required();
  cv_cmd->add_option("--study", study_flag, "spatiotemporal | temporal-jumps");
  cv_cmd->add_option("--temporal-groups", groups_flag, "number of temporal groups");
  cv_cmd->add_option("--k-spatial", kspatial_flag, "spatial clusters per group");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (seed_flag) cfg.seed = *seed_flag;
    if (out_flag) cfg.out_dir = *out_flag;
    if (threads_flag) cfg.threads = *threads_flag;
    if (study_flag) cfg.study = *study_flag;
    if (cfg.study != "spatiotemporal" && cfg.study != "temporal-jumps")
      throw ConfigError("unknown study '" + cfg.study + "'");
    if (algo_flag) {
      if (*algo_flag == "rf1")
        cfg.hybrid.algorithm = HybridAlgorithm::Rf1;
      else if (*algo_flag == "rf2")
        cfg.hybrid.algorithm = HybridAlgorithm::Rf2;
      else
        throw ConfigError("--algorithm must be rf1 or rf2");
    }
    if (propagate_flag) cfg.hybrid.propagate_uncertainty = true;
    if (groups_flag) cfg.cv_temporal_groups = *groups_flag;
    if (kspatial_flag) cfg.cv_k_spatial = *kspatial_flag;

    if (sim->parsed()) return cmd_simulate(cfg);
    if (fit_cmd->parsed()) return cmd_fit(cfg, fit_data, warm_start);
    if (hybrid_cmd->parsed()) return cmd_hybrid(cfg, hybrid_data);
    if (cv_cmd->parsed()) return cmd_cv(cfg, cv_data);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}
