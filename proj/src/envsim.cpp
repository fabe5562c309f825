#include "hdlab/envsim.hpp"

#include <algorithm>
#include <cmath>

namespace hdlab {

Topology topology_from_string(const std::string& s) {
  if (s == "single_store") return Topology::single_store;
  if (s == "warehouse_stores") return Topology::warehouse_stores;
  if (s == "transshipment") return Topology::transshipment;
  if (s == "serial") return Topology::serial;
  throw ConfigError("unknown topology: " + s);
}

std::string to_string(Topology t) {
  switch (t) {
    case Topology::single_store: return "single_store";
    case Topology::warehouse_stores: return "warehouse_stores";
    case Topology::transshipment: return "transshipment";
    case Topology::serial: return "serial";
  }
  return "?";
}

DemandMode demand_mode_from_string(const std::string& s) {
  if (s == "backlogged") return DemandMode::backlogged;
  if (s == "lost") return DemandMode::lost;
  throw ConfigError("unknown demand mode: " + s);
}

std::string to_string(DemandMode m) { return m == DemandMode::lost ? "lost" : "backlogged"; }

int ProblemInstance::max_lead() const {
  int m = 0;
  for (int l : lead) m = std::max(m, l);
  return m;
}

void ProblemInstance::validate() const {
  if (K < 1) throw ConfigError("instance: K must be >= 1");
  if (topology == Topology::single_store && K != 1)
    throw ConfigError("instance: single_store requires K = 1");
  if (static_cast<int>(p.size()) != demand_cols())
    throw ConfigError("instance: p must have " + std::to_string(demand_cols()) + " entries");
  if (static_cast<int>(h.size()) != K) throw ConfigError("instance: h must have K entries");
  if (static_cast<int>(lead.size()) != K) throw ConfigError("instance: lead must have K entries");
  for (double v : p)
    if (v < 0) throw ConfigError("instance: costs must be nonnegative");
  for (double v : h)
    if (v < 0) throw ConfigError("instance: costs must be nonnegative");
  for (int l : lead)
    if (l < 1) throw ConfigError("instance: lead times must be >= 1");
  if (h0 < 0 || beta < 0) throw ConfigError("instance: costs must be nonnegative");
  if (has_warehouse()) {
    if (L0 < 1) throw ConfigError("instance: warehouse lead time must be >= 1");
    double hmin = *std::min_element(h.begin(), h.end());
    if (topology == Topology::warehouse_stores && !(h0 < hmin))
      throw ConfigError("instance: warehouse holding cost must be below every store's");
  }
  if (allow_returns && topology != Topology::single_store)
    throw ConfigError("instance: returns are supported for a single store only");
  if (topology == Topology::serial && mode == DemandMode::lost)
    throw ConfigError("instance: serial topology supports backlogged demand only");
}

namespace {

Var zeros(Tape& t, Eigen::Index r, Eigen::Index c) { return t.constant(Mat::Zero(r, c)); }

// Multiplies x by the 0/1 mask lead == target, skipping trivial masks.
std::optional<Var> masked(Var x, const Eigen::MatrixXi& lead, int target) {
  Eigen::Index hits = (lead.array() == target).count();
  if (hits == 0) return std::nullopt;
  if (hits == lead.size()) return x;
  Mat m = (lead.array() == target).cast<double>().matrix();
  return mul(x, x.tape()->constant(std::move(m)));
}

struct PipeResult {
  Var arrival;
  std::vector<Var> next;
};

PipeResult advance(Tape& t, const std::vector<Var>& pipe, Var orders, const Eigen::MatrixXi& lead,
                   int slots) {
  PipeResult r;
  std::optional<Var> arr;
  if (slots > 0) arr = pipe[0];
  if (auto now = masked(orders, lead, 1)) arr = arr ? add(*arr, *now) : *now;
  r.arrival = arr ? *arr : zeros(t, orders.rows(), orders.cols());
  for (int j = 0; j < slots; ++j) {
    std::optional<Var> base;
    if (j + 1 < slots) base = pipe[j + 1];
    auto incoming = masked(orders, lead, j + 2);
    if (base && incoming)
      r.next.push_back(add(*base, *incoming));
    else if (base)
      r.next.push_back(*base);
    else if (incoming)
      r.next.push_back(*incoming);
    else
      r.next.push_back(zeros(t, orders.rows(), orders.cols()));
  }
  return r;
}

}  // namespace

SystemState initial_state(Tape& tape, const ScenarioBatch& b) {
  SystemState s;
  s.on_hand = tape.constant(b.on_hand);
  for (const Mat& m : b.pipeline) s.pipeline.push_back(tape.constant(m));
  if (b.wh_on_hand.size() > 0) s.wh_on_hand = tape.constant(b.wh_on_hand);
  for (const Mat& m : b.wh_pipeline) s.wh_pipeline.push_back(tape.constant(m));
  return s;
}

void check_feasible(const SystemState& s, const Action& a, const ProblemInstance& inst) {
  const double tol = 1e-9;
  if (!a.orders.valid()) throw InfeasibleAction("action has no orders");
  const Mat& q = a.orders.value();
  if (q.cols() != inst.K) throw ShapeError("action: orders must have K columns");
  if (!q.allFinite()) throw InfeasibleAction("action contains non-finite orders");
  if (!inst.allow_returns && q.minCoeff() < -tol)
    throw InfeasibleAction("negative order " + std::to_string(q.minCoeff()));
  if (inst.has_warehouse()) {
    if (!a.wh_order.valid()) throw InfeasibleAction("warehouse topology requires a warehouse order");
    if (a.wh_order.value().minCoeff() < -tol) throw InfeasibleAction("negative warehouse order");
    const Mat& i0 = s.wh_on_hand.value();
    Eigen::VectorXd total = q.rowwise().sum();
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
      double cap = i0(r, 0);
      if (total(r) > cap + tol * std::max(1.0, std::abs(cap)))
        throw InfeasibleAction("allocation " + std::to_string(total(r)) +
                               " exceeds warehouse inventory " + std::to_string(cap));
    }
  }
  if (inst.topology == Topology::serial) {
    const Mat& inv = s.on_hand.value();
    for (int k = 1; k < inst.K; ++k)
      for (Eigen::Index r = 0; r < q.rows(); ++r) {
        double cap = std::max(0.0, inv(r, k - 1));
        if (q(r, k) > cap + tol * std::max(1.0, cap))
          throw InfeasibleAction("transfer to echelon " + std::to_string(k) +
                                 " exceeds upstream inventory");
      }
  }
}

StepOutput step(const SystemState& s, const Action& a, const Mat& demand, const ScenarioBatch& b,
                const ProblemInstance& inst) {
  Tape& t = *s.on_hand.tape();
  const Eigen::Index rows = s.on_hand.rows();
  const int K = inst.K;
  if (demand.rows() != rows || demand.cols() != inst.demand_cols())
    throw ShapeError("step: demand shape does not match the instance");
  Var d = t.constant(demand);
  StepOutput out;

  PipeResult pipe = advance(t, s.pipeline, a.orders, b.lead, inst.pipeline_slots());
  out.next.pipeline = std::move(pipe.next);

  if (inst.topology == Topology::serial) {
    Var outflow = K > 1 ? concat_cols({cols(a.orders, 1, K - 1), zeros(t, rows, 1)})
                        : zeros(t, rows, 1);
    Var post = sub(s.on_hand, outflow);
    Var last = col(post, K - 1);
    Var short_units = relu(sub(d, last));
    Var excess = relu(sub(last, d));
    out.underage = mul(t.constant(b.p.col(0)), short_units);
    Var hold_last = mul(t.constant(b.h.col(K - 1)), excess);
    if (K > 1) {
      Var upstream = cols(post, 0, K - 1);
      Var hold_up = sum_cols(mul(t.constant(b.h.leftCols(K - 1)), upstream));
      out.holding = add(hold_up, hold_last);
    } else {
      out.holding = hold_last;
    }
    Var last_next = sub(last, d);
    Var pre = K > 1 ? concat_cols({cols(post, 0, K - 1), last_next}) : last_next;
    out.next.on_hand = add(pre, pipe.arrival);
    out.sales = sub(d, short_units);
    out.cost = add(out.underage, out.holding);
    return out;
  }

  Var short_units = relu(sub(d, s.on_hand));
  Var excess = relu(sub(s.on_hand, d));
  out.underage = sum_cols(mul(t.constant(b.p), short_units));
  out.holding = sum_cols(mul(t.constant(b.h), excess));
  out.sales = sub(d, short_units);
  Var pre = inst.mode == DemandMode::lost ? excess : sub(s.on_hand, d);
  out.next.on_hand = add(pre, pipe.arrival);
  out.cost = add(out.underage, out.holding);

  if (inst.has_warehouse()) {
    Var wh_post = sub(s.wh_on_hand, sum_cols(a.orders));
    Eigen::MatrixXi wl = Eigen::MatrixXi::Constant(rows, 1, inst.L0);
    PipeResult wp = advance(t, s.wh_pipeline, a.wh_order, wl, inst.warehouse_slots());
    out.next.wh_on_hand = add(wh_post, wp.arrival);
    out.next.wh_pipeline = std::move(wp.next);
    if (inst.h0 != 0.0) out.cost = add(out.cost, scale(wh_post, inst.h0));
    if (inst.beta != 0.0) out.cost = add(out.cost, scale(a.wh_order, inst.beta));
  }
  return out;
}

namespace {

struct StateValues {
  Mat on_hand, wh;
  std::vector<Mat> pipe, wh_pipe;
};

StateValues snapshot(const SystemState& s) {
  StateValues v;
  v.on_hand = s.on_hand.value();
  for (const Var& x : s.pipeline) v.pipe.push_back(x.value());
  if (s.wh_on_hand.valid()) v.wh = s.wh_on_hand.value();
  for (const Var& x : s.wh_pipeline) v.wh_pipe.push_back(x.value());
  return v;
}

SystemState restore(Tape& t, const StateValues& v) {
  SystemState s;
  s.on_hand = t.constant(v.on_hand);
  for (const Mat& m : v.pipe) s.pipeline.push_back(t.constant(m));
  if (v.wh.size() > 0) s.wh_on_hand = t.constant(v.wh);
  for (const Mat& m : v.wh_pipe) s.wh_pipeline.push_back(t.constant(m));
  return s;
}

std::vector<Var> bind_theta(Tape& t, const ParamSet& ps, bool record) {
  if (record) return t.bind(ps);
  std::vector<Var> out;
  for (int i = 0; i < ps.size(); ++i) out.push_back(t.constant(ps.value(i)));
  return out;
}

}  // namespace

RolloutOutput rollout(Tape& tape, const Policy& policy, const ScenarioBatch& b,
                      const ProblemInstance& inst, const RolloutSpec& spec) {
  if (spec.horizon > b.horizon())
    throw ConfigError("rollout: horizon " + std::to_string(spec.horizon) +
                      " exceeds trace length " + std::to_string(b.horizon()));
  if (spec.burn_in < 0 || spec.burn_in >= spec.horizon)
    throw ConfigError("rollout: burn-in must lie in [0, horizon)");
  const Eigen::Index rows = b.rows;
  SystemState state = initial_state(tape, b);
  std::vector<Var> theta = bind_theta(tape, policy.params(), spec.record);
  std::optional<Var> acc;
  Mat acc_value = Mat::Zero(rows, 1);
  for (int t = 0; t < spec.horizon; ++t) {
    Action a = policy.act(tape, theta, Observation{state, t, b, inst});
    if (spec.round_actions) {
      a.orders = round_values(a.orders);
      if (a.wh_order.valid()) a.wh_order = round_values(a.wh_order);
    }
    if (t < spec.grad_start) {
      a.orders = stop_gradient(a.orders);
      if (a.wh_order.valid()) a.wh_order = stop_gradient(a.wh_order);
    }
    check_feasible(state, a, inst);
    const Mat& d = b.demand_at(t);
    StepOutput out = step(state, a, d, b, inst);
    if (spec.observer) spec.observer(PeriodRecord{t, state, a, d, out});
    if (t >= spec.burn_in) {
      acc_value += out.cost.value();
      if (spec.record) acc = acc ? add(*acc, out.cost) : out.cost;
    }
    state = out.next;
    if (!spec.record) {
      StateValues v = snapshot(state);
      tape.clear();
      state = restore(tape, v);
      theta = bind_theta(tape, policy.params(), false);
    }
  }
  RolloutOutput r;
  if (spec.record) r.scenario_cost = *acc;
  r.scenario_cost_value = acc_value;
  const double denom = static_cast<double>(rows) * (spec.horizon - spec.burn_in) *
                       static_cast<double>(inst.demand_cols());
  r.mean_cost_per_store_period = acc_value.sum() / denom;
  return r;
}

InitialState initialize(const ProblemInstance& inst, InitMode mode,
                        const std::vector<double>& mu_hat, int rows, std::mt19937_64& rng,
                        const Eigen::MatrixXi* lead) {
  const int K = inst.K;
  if (static_cast<int>(mu_hat.size()) != K)
    throw ConfigError("initialize: need one sample mean per location");
  for (double m : mu_hat)
    if (m < 0) throw ConfigError("initialize: sample means must be nonnegative");
  const int slots = inst.pipeline_slots();
  InitialState s;
  s.on_hand = Mat::Zero(rows, K);
  s.pipeline.assign(slots, Mat::Zero(rows, K));
  s.wh_on_hand = Mat::Zero(rows, 1);
  s.wh_pipeline.assign(inst.warehouse_slots(), Mat::Zero(rows, 1));
  if (mode == InitMode::zero) return s;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int r = 0; r < rows; ++r)
    for (int k = 0; k < K; ++k) {
      int L = lead ? (*lead)(r, k) : inst.lead[k];
      s.on_hand(r, k) = mu_hat[k] * u01(rng);
      for (int j = 0; j < L - 1 && j < slots; ++j) s.pipeline[j](r, k) = mu_hat[k] * u01(rng);
    }
  return s;
}

}  // namespace hdlab
