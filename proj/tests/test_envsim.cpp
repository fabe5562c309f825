#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hdlab/envsim.hpp"
#include "hdlab/policies.hpp"
#include "hdlab/scenarios.hpp"
#include "hdlab/trainer.hpp"

using namespace hdlab;

namespace {

ScenarioBatch one_row_batch(const ProblemInstance& inst, const std::vector<std::vector<double>>& demand,
                            const std::vector<double>& on_hand, double wh = 0.0) {
  ScenarioBatch b;
  b.rows = 1;
  for (const auto& d : demand) {
    Mat m(1, inst.demand_cols());
    for (int k = 0; k < inst.demand_cols(); ++k) m(0, k) = d[k];
    b.demand.push_back(m);
  }
  b.on_hand = Mat(1, inst.K);
  for (int k = 0; k < inst.K; ++k) b.on_hand(0, k) = on_hand[k];
  b.pipeline.assign(inst.pipeline_slots(), Mat::Zero(1, inst.K));
  b.wh_on_hand = Mat::Constant(1, 1, wh);
  b.wh_pipeline.assign(inst.warehouse_slots(), Mat::Zero(1, 1));
  b.p = Mat(1, inst.demand_cols());
  for (int k = 0; k < inst.demand_cols(); ++k) b.p(0, k) = inst.p[k];
  b.h = Mat(1, inst.K);
  b.lead = Eigen::MatrixXi(1, inst.K);
  for (int k = 0; k < inst.K; ++k) {
    b.h(0, k) = inst.h[k];
    b.lead(0, k) = inst.lead[k];
  }
  b.ids = {0};
  return b;
}

// Orders a fixed matrix every period.
class ConstantPolicy : public Policy {
 public:
  explicit ConstantPolicy(double q, double wh = 0.0) : q_(q), wh_(wh) {}
  Action act(Tape& tape, const std::vector<Var>&, const Observation& obs) const override {
    Action a;
    a.orders = tape.constant(Mat::Constant(obs.batch.rows, obs.inst.K, q_));
    if (obs.inst.has_warehouse()) a.wh_order = tape.constant(Mat::Constant(obs.batch.rows, 1, wh_));
    return a;
  }
  ParamSet& params() override { return ps_; }
  const ParamSet& params() const override { return ps_; }
  std::string kind() const override { return "constant"; }

 private:
  double q_, wh_;
  ParamSet ps_;
};

// Orders demand L periods ahead, read from the batch.
class ClairvoyantPolicy : public Policy {
 public:
  Action act(Tape& tape, const std::vector<Var>&, const Observation& obs) const override {
    const int L = obs.inst.lead[0];
    const int t = obs.t + L;
    Action a;
    a.orders = tape.constant(t < obs.batch.horizon() ? obs.batch.demand_at(t)
                                                     : Mat::Zero(obs.batch.rows, 1));
    return a;
  }
  ParamSet& params() override { return ps_; }
  const ParamSet& params() const override { return ps_; }
  std::string kind() const override { return "clairvoyant"; }

 private:
  ParamSet ps_;
};

ProblemInstance single(DemandMode mode, double p = 4.0, int L = 1) {
  ProblemInstance inst;
  inst.mode = mode;
  inst.p = {p};
  inst.h = {1.0};
  inst.lead = {L};
  return inst;
}

}  // namespace

TEST(Step, BackloggedShortage) {
  ProblemInstance inst = single(DemandMode::backlogged);
  ScenarioBatch b = one_row_batch(inst, {{7}}, {5});
  Tape t;
  SystemState s = initial_state(t, b);
  Action a;
  a.orders = t.constant(Mat::Zero(1, 1));
  StepOutput o = step(s, a, b.demand[0], b, inst);
  EXPECT_DOUBLE_EQ(o.next.on_hand.value()(0, 0), -2.0);
  EXPECT_DOUBLE_EQ(o.cost.value()(0, 0), 2 * 4.0);
}

TEST(Step, LostShortageWithArrival) {
  ProblemInstance inst = single(DemandMode::lost);
  ScenarioBatch b = one_row_batch(inst, {{7}}, {5});
  Tape t;
  SystemState s = initial_state(t, b);
  Action a;
  a.orders = t.constant(Mat::Constant(1, 1, 3.0));  // lead time 1 arrives at the end of the period
  StepOutput o = step(s, a, b.demand[0], b, inst);
  EXPECT_DOUBLE_EQ(o.next.on_hand.value()(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(o.cost.value()(0, 0), 2 * 4.0);
}

TEST(Step, WarehouseHoldingCost) {
  ProblemInstance inst;
  inst.topology = Topology::warehouse_stores;
  inst.K = 2;
  inst.p = {4.0, 4.0};
  inst.h = {1.0, 1.0};
  inst.lead = {1, 1};
  inst.L0 = 1;
  inst.h0 = 0.3;
  // Demand equals on-hand so store costs vanish.
  ScenarioBatch b = one_row_batch(inst, {{3, 3}}, {3, 3}, 10.0);
  Tape t;
  SystemState s = initial_state(t, b);
  Action a;
  a.orders = t.constant((Mat(1, 2) << 2.0, 2.0).finished());
  a.wh_order = t.constant(Mat::Zero(1, 1));
  check_feasible(s, a, inst);
  StepOutput o = step(s, a, b.demand[0], b, inst);
  EXPECT_NEAR(o.cost.value()(0, 0), 1.8, 1e-12);
}

TEST(Step, InfeasibleActionsAreRejected) {
  ProblemInstance inst = single(DemandMode::backlogged);
  ScenarioBatch b = one_row_batch(inst, {{1}}, {0});
  Tape t;
  SystemState s = initial_state(t, b);
  Action a;
  a.orders = t.constant(Mat::Constant(1, 1, -1.0));
  EXPECT_THROW(check_feasible(s, a, inst), InfeasibleAction);

  ProblemInstance w;
  w.topology = Topology::warehouse_stores;
  w.K = 2;
  w.p = {1, 1};
  w.h = {1, 1};
  w.lead = {1, 1};
  w.L0 = 1;
  ScenarioBatch wb = one_row_batch(w, {{1, 1}}, {0, 0}, 3.0);
  SystemState ws = initial_state(t, wb);
  Action wa;
  wa.orders = t.constant((Mat(1, 2) << 2.0, 2.0).finished());
  wa.wh_order = t.constant(Mat::Zero(1, 1));
  EXPECT_THROW(check_feasible(ws, wa, w), InfeasibleAction);
}

TEST(Rollout, ZeroOrderBacklogAccrues) {
  ProblemInstance inst = single(DemandMode::backlogged, 1.0);
  const double d = 2.5;
  ScenarioBatch b = one_row_batch(inst, {{d}, {d}}, {0});
  Tape t;
  ConstantPolicy zero(0.0);
  RolloutSpec spec;
  spec.horizon = 2;
  spec.burn_in = 0;
  RolloutOutput out = rollout(t, zero, b, inst, spec);
  EXPECT_DOUBLE_EQ(out.scenario_cost_value(0, 0), d + 2 * d);
}

TEST(Rollout, ClairvoyantArrivalsCostNothing) {
  for (int L : {1, 3}) {
    ProblemInstance inst = single(DemandMode::lost, 4.0, L);
    std::vector<std::vector<double>> dem;
    for (int t = 0; t < 12; ++t) dem.push_back({1.0 + (t % 4)});
    ScenarioBatch b = one_row_batch(inst, dem, {0});
    // Start with exactly the first L demands on hand or in the pipeline.
    b.on_hand(0, 0) = dem[0][0];
    for (int j = 0; j + 1 < L; ++j) b.pipeline[j](0, 0) = dem[j + 1][0];
    Tape t;
    ClairvoyantPolicy jit;
    RolloutSpec spec;
    spec.horizon = 12 - L;
    spec.burn_in = 0;
    RolloutOutput out = rollout(t, jit, b, inst, spec);
    EXPECT_NEAR(out.scenario_cost_value(0, 0), 0.0, 1e-12) << "L=" << L;
  }
}

TEST(Rollout, LostDemandOnHandNeverNegative) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    ProblemInstance inst = single(DemandMode::lost, 9.0, 1 + trial % 3);
    DemandModel dm;
    dm.kind = DemandModel::Kind::poisson;
    dm.lambda = 5.0;
    TraceStore s = generate(dm, 30, 1, 8, rng());
    s.loc_cols = 1;
    attach_initial_states(s, inst, InitMode::uniform, {5.0}, rng());
    ScenarioBatch b = make_batch(s, inst, {0, 1, 2, 3, 4, 5, 6, 7}, 30);
    ConstantPolicy pol(static_cast<double>(rng() % 8));
    bool ok = true;
    RolloutSpec spec;
    spec.horizon = 30;
    spec.burn_in = 0;
    spec.record = false;
    spec.observer = [&](const PeriodRecord& r) {
      if (r.out.next.on_hand.value().minCoeff() < 0) ok = false;
    };
    Tape t;
    rollout(t, pol, b, inst, spec);
    EXPECT_TRUE(ok);
  }
}

TEST(Rollout, BackloggedSystemInventoryIsConserved) {
  ProblemInstance inst;
  inst.topology = Topology::warehouse_stores;
  inst.K = 3;
  inst.p = {4, 4, 4};
  inst.h = {1, 1, 1};
  inst.lead = {2, 2, 2};
  inst.L0 = 2;
  DemandModel dm;
  dm.kind = DemandModel::Kind::poisson;
  dm.lambda = 3.0;
  TraceStore s = generate(dm, 20, 3, 4, 5);
  s.loc_cols = 3;
  attach_initial_states(s, inst, InitMode::uniform, {3, 3, 3}, 6);
  ScenarioBatch b = make_batch(s, inst, {0, 1, 2, 3}, 20);
  ConstantPolicy pol(0.0, 6.0);
  auto total = [](const SystemState& st) {
    Eigen::VectorXd z = st.on_hand.value().rowwise().sum() + st.wh_on_hand.value().col(0);
    for (const Var& p : st.pipeline) z += p.value().rowwise().sum();
    for (const Var& p : st.wh_pipeline) z += p.value().col(0);
    return z;
  };
  bool ok = true;
  RolloutSpec spec;
  spec.horizon = 20;
  spec.burn_in = 0;
  spec.observer = [&](const PeriodRecord& r) {
    Eigen::VectorXd expect = total(r.state) + r.action.wh_order.value().col(0) -
                             r.demand.rowwise().sum();
    if ((total(r.out.next) - expect).cwiseAbs().maxCoeff() > 1e-9) ok = false;
  };
  Tape t;
  rollout(t, pol, b, inst, spec);
  EXPECT_TRUE(ok);
}

TEST(Rollout, TransshipmentHoldsNothingAfterAllocation) {
  ProblemInstance inst;
  inst.topology = Topology::transshipment;
  inst.K = 3;
  inst.p = {4, 4, 4};
  inst.h = {1, 1, 1};
  inst.lead = {2, 2, 2};
  inst.L0 = 3;
  inst.allow_negative_demand = true;
  DemandModel dm;
  dm.kind = DemandModel::Kind::corr_normal;
  dm.means = {5, 4, 6};
  dm.cvs = {0.2, 0.2, 0.2};
  dm.truncate = false;
  DatasetSpec ds;
  ds.train_H = ds.dev_H = ds.test_H = 8;
  ds.train_T = ds.dev_T = ds.test_T = 20;
  Dataset d = build_dataset(inst, dm, ds);
  VanillaConfig vc;
  vc.hidden = {8};
  vc.feasibility = FeasibilityKind::softmax_no_constant;
  VanillaPolicy pol(inst, vc, d.mu_hat);
  ScenarioBatch b = make_batch(d.train, inst, {0, 1, 2, 3, 4, 5, 6, 7}, 20);
  double worst = 0.0;
  RolloutSpec spec;
  spec.horizon = 20;
  spec.burn_in = 0;
  spec.observer = [&](const PeriodRecord& r) {
    Eigen::VectorXd left = r.state.wh_on_hand.value().col(0) - r.action.orders.value().rowwise().sum();
    worst = std::max(worst, left.cwiseAbs().maxCoeff());
  };
  Tape t;
  rollout(t, pol, b, inst, spec);
  EXPECT_LT(worst, 1e-9);
}

TEST(Rollout, ActionGradientMatchesFiniteDifferences) {
  // d(total cost)/d(constant order) through a 10-period backlogged rollout.
  ProblemInstance inst = single(DemandMode::backlogged, 4.0, 2);
  std::vector<std::vector<double>> dem;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(2.0, 8.0);
  for (int t = 0; t < 10; ++t) dem.push_back({u(rng)});
  ScenarioBatch b = one_row_batch(inst, dem, {3.3});
  class Param : public Policy {
   public:
    Param() { ps_.add("q", Mat::Constant(1, 1, 4.7)); }
    Action act(Tape&, const std::vector<Var>& th, const Observation&) const override {
      Action a;
      a.orders = th[0];
      return a;
    }
    ParamSet& params() override { return ps_; }
    const ParamSet& params() const override { return ps_; }
    std::string kind() const override { return "param"; }
    ParamSet ps_;
  } pol;
  auto cost = [&](double q) {
    pol.ps_.value(0)(0, 0) = q;
    Tape t;
    RolloutSpec spec;
    spec.horizon = 10;
    spec.burn_in = 0;
    return rollout(t, pol, b, inst, spec).scenario_cost_value(0, 0);
  };
  pol.ps_.value(0)(0, 0) = 4.7;
  Tape t;
  RolloutSpec spec;
  spec.horizon = 10;
  spec.burn_in = 0;
  RolloutOutput out = rollout(t, pol, b, inst, spec);
  t.backward(sum_all(out.scenario_cost));
  const double g = t.param_grads(pol.ps_)[0](0, 0);
  const double eps = 1e-6;
  const double fd = (cost(4.7 + eps) - cost(4.7 - eps)) / (2 * eps);
  EXPECT_LT(std::abs(g - fd) / std::max(1.0, std::abs(fd)), 1e-5);
}

TEST(Initialize, ZeroModeAndZeroMean) {
  ProblemInstance inst = single(DemandMode::lost, 4.0, 3);
  std::mt19937_64 rng(1);
  InitialState z = initialize(inst, InitMode::zero, {5.0}, 10, rng);
  EXPECT_EQ(z.on_hand, Mat::Zero(10, 1));
  for (const Mat& p : z.pipeline) EXPECT_EQ(p, Mat::Zero(10, 1));
  InitialState u = initialize(inst, InitMode::uniform, {0.0}, 10, rng);
  EXPECT_EQ(u.on_hand, Mat::Zero(10, 1));
}

TEST(Initialize, UniformMeanIsHalfTheSampleMean) {
  ProblemInstance inst = single(DemandMode::lost, 4.0, 2);
  std::mt19937_64 rng(2);
  InitialState s = initialize(inst, InitMode::uniform, {6.0}, 100000, rng);
  EXPECT_NEAR(s.on_hand.mean(), 3.0, 0.03);
  EXPECT_NEAR(s.pipeline[0].mean(), 3.0, 0.03);
}

TEST(Instance, ValidationRules) {
  ProblemInstance inst;
  inst.topology = Topology::warehouse_stores;
  inst.K = 2;
  inst.p = {1, 1};
  inst.h = {1, 1};
  inst.lead = {1, 1};
  inst.L0 = 1;
  inst.h0 = 1.5;
  EXPECT_THROW(inst.validate(), ConfigError);
  inst.h0 = 0.2;
  EXPECT_NO_THROW(inst.validate());
  inst.lead = {0, 1};
  EXPECT_THROW(inst.validate(), ConfigError);
}
