#pragma once

// Differentiable inventory environment. All quantities are batched: one
// scenario per row, one location per column.
//
// Pipelines are arrival-aligned: pipeline[j] holds the units that arrive at
// the end of period t + j. A location with lead time L uses slots 0..L-2, so
// for it the vector reads as its outstanding orders, oldest first. Orders
// placed with lead time 1 arrive at the end of the current period.

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hdlab/diffengine.hpp"

namespace hdlab {

enum class Topology { single_store, warehouse_stores, transshipment, serial };
enum class DemandMode { backlogged, lost };

Topology topology_from_string(const std::string& s);
std::string to_string(Topology t);
DemandMode demand_mode_from_string(const std::string& s);
std::string to_string(DemandMode m);

struct ProblemInstance {
  Topology topology = Topology::single_store;
  DemandMode mode = DemandMode::backlogged;
  // Stores, or echelons for the serial topology (index 0 most upstream).
  int K = 1;
  // Underage cost per demand-facing location (one entry for serial).
  std::vector<double> p{4.0};
  std::vector<double> h{1.0};
  std::vector<int> lead{1};
  double h0 = 0.0;
  double beta = 0.0;
  int L0 = 0;
  bool allow_negative_demand = false;
  // Single store only: orders may be negative (returns to the supplier).
  bool allow_returns = false;

  void validate() const;
  bool has_warehouse() const {
    return topology == Topology::warehouse_stores || topology == Topology::transshipment;
  }
  int demand_cols() const { return topology == Topology::serial ? 1 : K; }
  int max_lead() const;
  // Number of pipeline slots kept per location column.
  int pipeline_slots() const { return max_lead() > 1 ? max_lead() - 1 : 0; }
  int warehouse_slots() const { return L0 > 1 ? L0 - 1 : 0; }
};

// Per-scenario primitives and traces for a batch of scenarios.
struct ScenarioBatch {
  int rows = 0;
  std::vector<Mat> demand;  // one rows x demand_cols matrix per period
  Mat on_hand;              // rows x K
  std::vector<Mat> pipeline;
  Mat wh_on_hand;  // rows x 1
  std::vector<Mat> wh_pipeline;
  Mat p;                    // rows x demand_cols
  Mat h;                    // rows x K
  Eigen::MatrixXi lead;     // rows x K
  std::vector<Mat> exo;     // optional per-period rows x f exogenous features
  int history = 0;          // leading periods of demand observed before t = 0
  std::vector<int> ids;

  int horizon() const { return static_cast<int>(demand.size()) - history; }
  // Demand of period t (t may be negative down to -history).
  const Mat& demand_at(int t) const { return demand.at(static_cast<std::size_t>(t + history)); }
};

struct SystemState {
  Var on_hand;
  std::vector<Var> pipeline;
  Var wh_on_hand;
  std::vector<Var> wh_pipeline;
};

struct Action {
  Var wh_order;  // rows x 1, warehouse topologies only
  Var orders;    // rows x K; serial: col 0 external order, col k transfer k-1 -> k
};

struct StepOutput {
  SystemState next;
  Var cost;        // rows x 1
  Var underage;    // rows x 1, store underage cost component
  Var holding;     // rows x 1, store holding cost component
  Var sales;       // rows x demand_cols, units sold (min(demand, on hand))
};

SystemState initial_state(Tape& tape, const ScenarioBatch& batch);

// Throws InfeasibleAction when the action violates its constraints.
void check_feasible(const SystemState& s, const Action& a, const ProblemInstance& inst);

StepOutput step(const SystemState& s, const Action& a, const Mat& demand,
                const ScenarioBatch& batch, const ProblemInstance& inst);

struct Observation {
  const SystemState& state;
  int t;
  const ScenarioBatch& batch;
  const ProblemInstance& inst;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action act(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const = 0;
  virtual ParamSet& params() = 0;
  virtual const ParamSet& params() const = 0;
  virtual std::string kind() const = 0;
};

struct PeriodRecord {
  int t;
  const SystemState& state;
  const Action& action;
  const Mat& demand;
  const StepOutput& out;
};

struct RolloutSpec {
  int horizon = 50;
  int burn_in = 30;
  // Keep the whole graph for backward(); otherwise detach every period.
  bool record = true;
  bool round_actions = false;
  // Action gradients are cut for t < grad_start.
  int grad_start = 0;
  std::function<void(const PeriodRecord&)> observer;
};

struct RolloutOutput {
  Var scenario_cost;  // rows x 1, total over counted periods (recorded mode)
  Mat scenario_cost_value;
  double mean_cost_per_store_period = 0.0;
};

RolloutOutput rollout(Tape& tape, const Policy& policy, const ScenarioBatch& batch,
                      const ProblemInstance& inst, const RolloutSpec& spec);

enum class InitMode { uniform, zero };

struct InitialState {
  Mat on_hand;
  std::vector<Mat> pipeline;
  Mat wh_on_hand;
  std::vector<Mat> wh_pipeline;
};

// Draws `rows` initial states. Uniform mode samples store on-hand and every
// pipeline slot used by the store's lead time from Uniform(0, mu_hat[k]).
// Warehouse quantities always start at zero.
InitialState initialize(const ProblemInstance& inst, InitMode mode,
                        const std::vector<double>& mu_hat, int rows, std::mt19937_64& rng,
                        const Eigen::MatrixXi* lead = nullptr);

}  // namespace hdlab
