#include <gtest/gtest.h>

#include "hdlab/oracles.hpp"
#include "hdlab/policies.hpp"
#include "hdlab/trainer.hpp"

using namespace hdlab;

namespace {

struct Fixture {
  ProblemInstance inst;
  DemandModel model;
  Dataset data;
};

Fixture backlogged_single(int train_H = 512, int dev_H = 256) {
  Fixture f;
  f.model.kind = DemandModel::Kind::trunc_normal;
  f.model.mu = 5.0;
  f.model.sigma = 1.6;
  DatasetSpec ds;
  ds.train_H = train_H;
  ds.dev_H = dev_H;
  ds.test_H = 64;
  ds.train_T = ds.dev_T = 40;
  ds.test_T = 40;
  ds.seed = 21;
  f.data = build_dataset(f.inst, f.model, ds);
  return f;
}

TrainConfig quick(long steps, double lr) {
  TrainConfig c;
  c.batch_size = 128;
  c.learning_rate = lr;
  c.max_gradient_steps = steps;
  c.eval_every = 25;
  c.train_T = c.dev_T = 40;
  c.train_burn_in = c.dev_burn_in = 20;
  c.shard_rows = 64;
  return c;
}

}  // namespace

TEST(Trainer, BaseStockLevelConvergesToTheCriticalQuantile) {
  Fixture f = backlogged_single();
  const double target = newsvendor_level(f.model, 4.0, 1.0, 1);
  BaseStockPolicy pol(f.model.mu * 1.2);
  TrainConfig c = quick(600, 0.05);
  hdpo_train(pol, f.data.train, f.data.dev, f.inst, c);
  EXPECT_NEAR(pol.level(), target, 0.2);
}

TEST(Trainer, ZeroLearningRateLeavesParametersUnchanged) {
  Fixture f = backlogged_single(256, 128);
  VanillaConfig vc;
  vc.hidden = {8};
  vc.feature_scale = 5.0;
  VanillaPolicy pol(f.inst, vc, f.data.mu_hat);
  const ParamSet before = pol.params();
  TrainConfig c = quick(20, 0.0);
  hdpo_train(pol, f.data.train, f.data.dev, f.inst, c);
  for (int i = 0; i < before.size(); ++i) EXPECT_EQ(pol.params().value(i), before.value(i));
}

TEST(Trainer, RunsAreReproducibleAcrossThreadCounts) {
  Fixture f = backlogged_single(256, 128);
  VanillaConfig vc;
  vc.hidden = {8, 8};
  vc.feature_scale = 5.0;
  auto run = [&](int parallelism) {
    VanillaPolicy pol(f.inst, vc, f.data.mu_hat);
    TrainConfig c = quick(50, 1e-2);
    c.parallelism = parallelism;
    TrainResult r = hdpo_train(pol, f.data.train, f.data.dev, f.inst, c);
    return std::make_pair(r.record.metrics_csv(), pol.params());
  };
  auto [m1, p1] = run(1);
  auto [m2, p2] = run(1);
  auto [m3, p3] = run(3);
  EXPECT_EQ(m1, m2);
  EXPECT_EQ(m1, m3);
  for (int i = 0; i < p1.size(); ++i) {
    EXPECT_EQ(p1.value(i), p2.value(i));
    EXPECT_EQ(p1.value(i), p3.value(i));
  }
}

TEST(Trainer, BatchGradientIsLinearInTheScenarioSet) {
  Fixture f = backlogged_single(256, 128);
  VanillaConfig vc;
  vc.hidden = {8};
  vc.feature_scale = 5.0;
  VanillaPolicy pol(f.inst, vc, f.data.mu_hat);
  std::vector<int> a, b, ab;
  for (int i = 0; i < 48; ++i) (i < 16 ? a : b).push_back(i), ab.push_back(i);
  auto g = [&](const std::vector<int>& ids) {
    return batch_gradient(pol, f.data.train, f.inst, ids, 40, 20, 0, 32, 1);
  };
  BatchGradient ga = g(a), gb = g(b), gab = g(ab);
  EXPECT_NEAR(gab.loss, (16 * ga.loss + 32 * gb.loss) / 48, 1e-12 * std::abs(gab.loss));
  for (std::size_t i = 0; i < gab.grads.size(); ++i) {
    const Mat combo = (16 * ga.grads[i] + 32 * gb.grads[i]) / 48;
    EXPECT_LT((gab.grads[i] - combo).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Trainer, PatienceStopsAStalledRun) {
  Fixture f = backlogged_single(256, 128);
  VanillaConfig vc;
  vc.hidden = {8};
  VanillaPolicy pol(f.inst, vc, f.data.mu_hat);
  TrainConfig c = quick(10000, 0.0);
  c.eval_every = 2;
  c.patience = 3;
  TrainResult r = hdpo_train(pol, f.data.train, f.data.dev, f.inst, c);
  EXPECT_EQ(r.record.stop_reason, "patience");
  EXPECT_EQ(r.record.steps, 8);
  EXPECT_EQ(r.record.best_steps, 2);
}

TEST(Trainer, BestDevParametersAreRestored) {
  Fixture f = backlogged_single(256, 128);
  BaseStockPolicy pol(3.0);
  TrainConfig c = quick(100, 0.05);
  TrainResult r = hdpo_train(pol, f.data.train, f.data.dev, f.inst, c);
  EvalSpec dev{c.dev_T, c.dev_burn_in};
  EXPECT_DOUBLE_EQ(evaluate(pol, f.data.dev, f.inst, dev), r.record.best_dev);
  for (const EvalRecord& e : r.record.evals) EXPECT_GE(e.dev_loss, r.record.best_dev);
}

TEST(Evaluate, RoundingAndThreadCountsAgree) {
  Fixture f = backlogged_single(64, 64);
  BaseStockPolicy pol(6.0);
  EvalSpec s{40, 20};
  const double a = evaluate(pol, f.data.test, f.inst, s);
  s.parallelism = 4;
  s.shard_rows = 7;
  EXPECT_NEAR(evaluate(pol, f.data.test, f.inst, s), a, 1e-12 * a);
  Eigen::VectorXd per = evaluate_scenarios(pol, f.data.test, f.inst, EvalSpec{40, 20});
  EXPECT_NEAR(per.mean() / 20.0, a, 1e-12 * a);
}
