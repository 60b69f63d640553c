#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "inlarf/metrics.hpp"

#include <random>
#include <sstream>

using namespace inlarf;

TEST_CASE("evaluate: zero error, hand oracle, degenerate intervals") {
  Eigen::VectorXd y(3), m(3), s(3);
  y << 1, 2, 3;
  m = y;
  s << 0.5, 0.5, 0.5;
  const auto perfect = evaluate(y, m, s);
  CHECK(perfect.rmse == doctest::Approx(0.0));
  CHECK(perfect.mae == doctest::Approx(0.0));
  CHECK(perfect.cp == doctest::Approx(1.0));

  Eigen::VectorXd y2(2), m2(2), s2(2);
  y2 << 0, 2;
  m2 << 1, 1;
  s2 << 1, 1;
  const auto hand = evaluate(y2, m2, s2);
  CHECK(hand.rmse == doctest::Approx(1.0));
  CHECK(hand.mae == doctest::Approx(1.0));
  CHECK(hand.cp == doctest::Approx(1.0));
  CHECK(hand.aiw == doctest::Approx(2.0 * interval_z).epsilon(1e-12));
  CHECK(hand.aiw == doctest::Approx(3.92).epsilon(1e-3));

  Eigen::VectorXd tiny_sd = Eigen::VectorXd::Constant(2, 1e-300);
  const auto degenerate = evaluate(y2, m2, tiny_sd);
  CHECK(degenerate.cp == doctest::Approx(0.0));

  Eigen::VectorXd short_m(1);
  CHECK_THROWS_AS(evaluate(y2, short_m, s2), std::invalid_argument);
}

TEST_CASE("evaluate: permutation invariant") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  const int n = 50;
  Eigen::VectorXd y(n), m(n), s(n);
  for (int i = 0; i < n; ++i) {
    y(i) = nd(rng);
    m(i) = nd(rng);
    s(i) = 0.5 + std::abs(nd(rng));
  }
  const auto a = evaluate(y, m, s);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::VectorXd y2(n), m2(n), s2(n);
  for (int i = 0; i < n; ++i) {
    y2(i) = y(perm[i]);
    m2(i) = m(perm[i]);
    s2(i) = s(perm[i]);
  }
  const auto b = evaluate(y2, m2, s2);
  CHECK(a.rmse == doctest::Approx(b.rmse).epsilon(1e-12));
  CHECK(a.mae == doctest::Approx(b.mae).epsilon(1e-12));
  CHECK(a.cp == doctest::Approx(b.cp));
  CHECK(a.aiw == doctest::Approx(b.aiw).epsilon(1e-12));
}

TEST_CASE("kmeans: separated clouds, trivial partitions, saturation") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i < 30; ++i) pts.emplace_back(0.05 * nd(rng), 0.05 * nd(rng));
  for (int i = 0; i < 30; ++i) pts.emplace_back(10.0 + 0.05 * nd(rng), 10.0 + 0.05 * nd(rng));
  const auto labels = kmeans(pts, 2, 3);
  for (int i = 1; i < 30; ++i) CHECK(labels[i] == labels[0]);
  for (int i = 31; i < 60; ++i) CHECK(labels[i] == labels[30]);
  CHECK(labels[0] != labels[30]);

  const auto one = kmeans(pts, 1, 3);
  for (int l : one) CHECK(l == 0);

  std::vector<Eigen::Vector2d> few = {{0, 0}, {1, 0}, {0, 1}};
  const auto each = kmeans(few, 3, 1);
  std::vector<int> sorted(each);
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2});

  CHECK_THROWS_AS(kmeans(few, 4, 1), std::invalid_argument);

  // deterministic given the seed
  CHECK(kmeans(pts, 2, 42) == kmeans(pts, 2, 42));
}

TEST_CASE("st_blocks: group x cluster combinations") {
  StSimConfig cfg;
  cfg.n_per_time = 40;
  cfg.t_len = 8;
  const auto ds = simulate_spatiotemporal(cfg, 6);

  const auto b6 = st_blocks(ds, contiguous_temporal_groups(8, 2), 3, 1);
  CHECK(b6.n_blocks == 6);
  const auto b1 = st_blocks(ds, contiguous_temporal_groups(8, 1), 1, 1);
  CHECK(b1.n_blocks == 1);
  const auto b16 = st_blocks(ds, contiguous_temporal_groups(8, 4), 4, 1);
  CHECK(b16.n_blocks == 16);

  // every row is assigned and every block non-empty
  std::vector<int> counts(b6.n_blocks + 1, 0);
  for (int b : b6.block) {
    REQUIRE(b >= 1);
    REQUIRE(b <= 6);
    ++counts[b];
  }
  for (int b = 1; b <= 6; ++b) CHECK(counts[b] > 0);

  // rows of one temporal group share the group's block range
  for (int i = 0; i < ds.n(); ++i) {
    const int g = ds.rows[i].t <= 4 ? 0 : 1;
    CHECK(b6.block[i] > g * 3);
    CHECK(b6.block[i] <= (g + 1) * 3);
  }

  const std::vector<std::vector<int>> bad = {{1, 2}, {2, 3, 4, 5, 6, 7, 8}};
  CHECK_THROWS_AS(st_blocks(ds, bad, 2, 1), std::invalid_argument);
}

TEST_CASE("cv_run: fold accounting and mean row") {
  StSimConfig cfg;
  cfg.n_per_time = 30;
  cfg.t_len = 4;
  const auto ds = simulate_spatiotemporal(cfg, 12);
  const auto blocks = st_blocks(ds, contiguous_temporal_groups(4, 2), 3, 7);

  // trivial runner: predicts the training mean with unit sd
  ModelRunner runner = [&](std::span<const int> train, std::span<const int>) {
    double mean = 0.0;
    for (int r : train) mean += ds.rows[r].response;
    mean /= static_cast<double>(train.size());
    return std::make_pair(Eigen::VectorXd::Constant(ds.n(), mean).eval(),
                          Eigen::VectorXd::Ones(ds.n()).eval());
  };
  const auto report = cv_run(ds, blocks, runner);
  REQUIRE(report.folds.size() == 6);

  double acc = 0.0;
  for (const auto& f : report.folds) acc += f.test.rmse;
  CHECK(report.mean_test.rmse == doctest::Approx(acc / 6.0).epsilon(1e-12));
  acc = 0.0;
  for (const auto& f : report.folds) acc += f.train.aiw;
  CHECK(report.mean_train.aiw == doctest::Approx(acc / 6.0).epsilon(1e-12));

  BlockAssignment single;
  single.block.assign(ds.n(), 1);
  single.n_blocks = 1;
  CHECK_THROWS_AS(cv_run(ds, single, runner), std::invalid_argument);
}

TEST_CASE("cv_run: symmetric blocks give symmetric folds") {
  // two identical halves by construction
  StDataset ds;
  ds.t_len = 1;
  for (int half = 0; half < 2; ++half)
    for (int i = 0; i < 20; ++i) {
      StRow r;
      r.x = i * 0.1;
      r.y = 0.0;
      r.t = 1;
      r.response = std::sin(i * 0.4);
      ds.rows.push_back(r);
    }
  BlockAssignment blocks;
  blocks.n_blocks = 2;
  blocks.block.assign(ds.n(), 1);
  for (int i = 20; i < 40; ++i) blocks.block[i] = 2;

  ModelRunner runner = [&](std::span<const int> train, std::span<const int>) {
    double mean = 0.0;
    for (int r : train) mean += ds.rows[r].response;
    mean /= static_cast<double>(train.size());
    return std::make_pair(Eigen::VectorXd::Constant(ds.n(), mean).eval(),
                          Eigen::VectorXd::Ones(ds.n()).eval());
  };
  const auto report = cv_run(ds, blocks, runner);
  CHECK(report.folds[0].test.rmse == doctest::Approx(report.folds[1].test.rmse).epsilon(1e-12));
  CHECK(report.folds[0].train.mae == doctest::Approx(report.folds[1].train.mae).epsilon(1e-12));
}

TEST_CASE("write_metric_csv: schema") {
  std::vector<MetricCsvRow> rows = {{"1", "train", {1.0, 0.5, 0.9, 2.0}},
                                    {"1", "test", {2.0, 1.5, 0.8, 3.0}}};
  std::stringstream ss;
  write_metric_csv(rows, ss);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "block_id,split,rmse,mae,cp,aiw");
  std::getline(ss, line);
  CHECK(line == "1,train,1,0.5,0.9,2");
}
