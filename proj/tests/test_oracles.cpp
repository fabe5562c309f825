#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "hdlab/oracles.hpp"

using namespace hdlab;

namespace {

DemandModel poisson(double lambda) {
  DemandModel m;
  m.kind = DemandModel::Kind::poisson;
  m.lambda = lambda;
  return m;
}

DemandModel trunc_normal(double mu, double sigma) {
  DemandModel m;
  m.kind = DemandModel::Kind::trunc_normal;
  m.mu = mu;
  m.sigma = sigma;
  return m;
}

ProblemInstance single(DemandMode mode, double p, int L) {
  ProblemInstance inst;
  inst.mode = mode;
  inst.p = {p};
  inst.h = {1.0};
  inst.lead = {L};
  return inst;
}

// Mean cost per period with a 3-sigma band from the per-scenario totals.
std::pair<double, double> mean_and_band(const Eigen::VectorXd& totals, int periods) {
  const double m = totals.mean();
  const double var = (totals.array() - m).square().sum() / (totals.size() - 1);
  return {m / periods, 3.0 * std::sqrt(var / totals.size()) / periods};
}

}  // namespace

TEST(Newsvendor, DeterministicDemandGivesLeadTimeMultiple) {
  for (int L : {1, 2, 4})
    EXPECT_NEAR(newsvendor_level(trunc_normal(3.0, 1e-9), 4.0, 1.0, L), 3.0 * (L + 1), 1e-6);
}

TEST(Newsvendor, EqualCostsGiveTheMedian) {
  // Poisson(5) over two periods is Poisson(10), whose median is 10.
  EXPECT_DOUBLE_EQ(newsvendor_level(poisson(5.0), 1.0, 1.0, 1), 10.0);
  EXPECT_NEAR(newsvendor_level(trunc_normal(20.0, 2.0), 3.0, 3.0, 0), 20.0, 0.01);
}

TEST(Newsvendor, MonotoneInUnderageCostAndLeadTime) {
  for (const DemandModel& m : {poisson(5.0), trunc_normal(5.0, 1.6)}) {
    double prev = -1.0;
    for (double p : {0.5, 1.0, 4.0, 9.0, 39.0}) {
      const double s = newsvendor_level(m, p, 1.0, 2);
      EXPECT_GE(s, prev);
      prev = s;
    }
    prev = -1.0;
    for (int L = 0; L <= 4; ++L) {
      const double s = newsvendor_level(m, 4.0, 1.0, L);
      EXPECT_GE(s, prev);
      prev = s;
    }
  }
  EXPECT_THROW(newsvendor_level(poisson(5.0), 0.0, 0.0, 1), Error);
}

TEST(Newsvendor, TruncatedNormalCostAnchor) {
  // Single store, backlogged, TN(5, 1.6), p=4, h=1, L=1: 3.17 per period.
  const DemandModel m = trunc_normal(5.0, 1.6);
  ProblemInstance inst = single(DemandMode::backlogged, 4.0, 1);
  DatasetSpec ds;
  ds.train_H = ds.dev_H = 8;
  ds.test_H = 4096;
  ds.test_T = 500;
  ds.seed = 31;
  Dataset d = build_dataset(inst, m, ds);
  BaseStockPolicy pol(newsvendor_level(m, 4.0, 1.0, 1));
  EXPECT_NEAR(evaluate(pol, d.test, inst, EvalSpec{500, 300}), 3.17, 0.02);
}

TEST(Dp, LostDemandAnchors) {
  EXPECT_NEAR(dp_lost_demand(5.0, 4.0, 1.0, 1).average_cost, 4.04, 0.005);
  EXPECT_NEAR(dp_lost_demand(5.0, 39.0, 1.0, 4).average_cost, 10.79, 0.01);
}

TEST(Dp, ZeroDemandCostsNothing) {
  DpResult r = dp_lost_demand(0.0, 4.0, 1.0, 2);
  EXPECT_NEAR(r.average_cost, 0.0, 1e-12);
  EXPECT_EQ(r.action_at({0, 0}), 0);
}

TEST(Dp, TightBoundFailsTheAudit) {
  DpConfig cfg;
  cfg.bound = 6;
  cfg.adaptive = false;
  EXPECT_THROW(dp_lost_demand(5.0, 9.0, 1.0, 2, cfg), TruncationError);
}

TEST(Dp, GreedyPolicyReproducesTheAverageCostInSimulation) {
  for (auto [L, p] : {std::pair{1, 4.0}, std::pair{2, 9.0}}) {
    DpResult r = dp_lost_demand(5.0, p, 1.0, L);
    ProblemInstance inst = single(DemandMode::lost, p, L);
    DatasetSpec ds;
    ds.train_H = ds.dev_H = 8;
    ds.test_H = 1024;
    ds.test_T = 500;
    ds.init = InitMode::zero;
    ds.seed = 41;
    Dataset d = build_dataset(inst, poisson(5.0), ds);
    DpPolicy pol(r);
    auto [mean, band] = mean_and_band(evaluate_scenarios(pol, d.test, inst, EvalSpec{500, 300}), 200);
    EXPECT_NEAR(mean, r.average_cost, band) << "L=" << L;
  }
}

TEST(Cbs, UncappedPolicyIsBaseStock) {
  ProblemInstance inst = single(DemandMode::lost, 9.0, 3);
  DatasetSpec ds;
  ds.train_H = ds.dev_H = 8;
  ds.test_H = 256;
  ds.test_T = 100;
  Dataset d = build_dataset(inst, poisson(5.0), ds);
  EvalSpec s{100, 50};
  for (double S : {12.0, 17.5, 22.0})
    EXPECT_DOUBLE_EQ(evaluate(CappedBaseStockPolicy(S, 1e12), d.test, inst, s),
                     evaluate(BaseStockPolicy(S), d.test, inst, s));
}

TEST(Cbs, ShortLeadTimeIsNearOptimal) {
  // L=2, p=4: the capped base-stock heuristic is within 0.25% of the optimum.
  ProblemInstance inst = single(DemandMode::lost, 4.0, 2);
  DatasetSpec ds;
  ds.train_H = 8;
  ds.dev_H = 1024;
  ds.test_H = 4096;
  ds.dev_T = 50;
  ds.test_T = 500;
  ds.seed = 51;
  Dataset d = build_dataset(inst, poisson(5.0), ds);
  CbsResult c = cbs_search(inst, d.dev, EvalSpec{50, 30}, 5.0);
  const double test = evaluate(CappedBaseStockPolicy(c.level, c.cap), d.test, inst, EvalSpec{500, 300});
  const double opt = dp_lost_demand(5.0, 4.0, 1.0, 2).average_cost;
  EXPECT_LT(100.0 * (test - opt) / opt, 0.25);
}

TEST(Echelon, SingleEchelonMatchesNewsvendor) {
  const DemandModel m = trunc_normal(5.0, 1.6);
  ProblemInstance inst;
  inst.topology = Topology::serial;
  inst.K = 1;
  inst.p = {4.0};
  inst.h = {1.0};
  inst.lead = {1};
  DatasetSpec ds;
  ds.train_H = 1024;
  ds.dev_H = 1024;
  ds.test_H = 8;
  ds.train_T = ds.dev_T = 50;
  ds.seed = 61;
  Dataset d = build_dataset(inst, m, ds);
  EchelonSearchConfig cfg;
  cfg.train.batch_size = 256;
  cfg.train.learning_rate = 0.05;
  cfg.train.max_gradient_steps = 400;
  cfg.train.eval_every = 50;
  EchelonResult r = echelon_search(inst, d.train, d.dev, 5.0, cfg);
  ASSERT_EQ(r.levels.size(), 1u);
  EXPECT_NEAR(r.levels[0], newsvendor_level(m, 4.0, 1.0, 1), 0.2);
}

TEST(Transshipment, EqualCostsCloseTheBound) {
  const std::vector<double> mu{5, 7, 4}, sd{1, 2, 1.5};
  Mat S = constant_correlation_cov(sd, 0.0);
  TransshipmentBound b = transshipment_bound(3, 2.0, 2.0, 3, 2, mu, S);
  EXPECT_NEAR(b.S0, b.mu_G, 1e-9);
  EXPECT_NEAR(b.s_hat, 0.0, 1e-9);
  const double phi0 = 1.0 / std::sqrt(2 * M_PI);
  EXPECT_NEAR(b.per_store, 4.0 * b.sigma_G * phi0 / 3.0, 1e-9);
  EXPECT_NEAR(b.total, 3.0 * b.per_store, 1e-9);
}

TEST(Transshipment, NonPsdCovarianceIsRejected) {
  Mat S(2, 2);
  S << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(transshipment_bound(2, 4, 1, 3, 2, {5, 5}, S), Error);
}

TEST(Transshipment, RelaxedSimulationReproducesTheBound) {
  const std::vector<double> mu{5, 7, 4}, sd{1.5, 2.1, 1.0};
  Mat S = constant_correlation_cov(sd, 0.3);
  TransshipmentBound b = transshipment_bound(3, 4.0, 1.0, 3, 2, mu, S);
  MonteCarloEstimate mc = simulate_relaxed_transshipment(3, 4.0, 1.0, 3, 2, mu, S, b.S0, 400000, 7);
  EXPECT_NEAR(mc.mean, b.total, 3.0 * mc.stderr_);
}

TEST(Cache, PersistsAcrossInstances) {
  const auto path = std::filesystem::temp_directory_path() / "hdlab_oracle_cache_test.json";
  std::filesystem::remove(path);
  {
    OracleCache c(path.string());
    EXPECT_FALSE(c.has("k"));
    c.put("k", {{"cost", 4.04}});
  }
  OracleCache c(path.string());
  ASSERT_TRUE(c.has("k"));
  EXPECT_DOUBLE_EQ(c.get("k")["cost"].get<double>(), 4.04);
  std::filesystem::remove(path);
}
