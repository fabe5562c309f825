#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdlab/envsim.hpp"
#include "hdlab/scenarios.hpp"
#include "hdlab/trainer.hpp"

namespace hdlab {

// Order up to S on the inventory position: (S - X)+. Single store only.
class BaseStockPolicy : public Policy {
 public:
  explicit BaseStockPolicy(double level);
  Action act(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const override;
  ParamSet& params() override { return ps_; }
  const ParamSet& params() const override { return ps_; }
  std::string kind() const override { return "base_stock"; }
  double level() const { return ps_.value(0)(0, 0); }

 private:
  ParamSet ps_;
};

// min{(S - X)+, r}. Single store only.
class CappedBaseStockPolicy : public Policy {
 public:
  CappedBaseStockPolicy(double level, double cap);
  Action act(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const override;
  ParamSet& params() override { return ps_; }
  const ParamSet& params() const override { return ps_; }
  std::string kind() const override { return "capped_base_stock"; }

 private:
  ParamSet ps_;
};

// Serial echelon-stock policy; the levels are differentiable parameters.
class EchelonPolicy : public Policy {
 public:
  explicit EchelonPolicy(const std::vector<double>& levels);
  Action act(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const override;
  ParamSet& params() override { return ps_; }
  const ParamSet& params() const override { return ps_; }
  std::string kind() const override { return "echelon_stock"; }
  std::vector<double> levels() const;

 private:
  ParamSet ps_;
};

// Inventory position per location column: on-hand plus all pipeline slots.
Var inventory_position(const SystemState& s);

// Critical-ratio quantile of demand summed over L + 1 periods.
// Poisson uses the exact distribution; continuous models use 1e6 draws.
double newsvendor_level(const DemandModel& model, double p, double h, int L,
                        std::uint64_t seed = 12345, int samples = 1000000);

struct DpResult {
  double average_cost = 0.0;
  int bound = 0;           // cap on the inventory position after ordering
  int iterations = 0;
  double span = 0.0;
  double boundary_mass = 0.0;
  int L = 1;
  // Greedy action on the dense lattice (I, q_0, ..., q_{L-2}), each 0..bound.
  std::vector<int> action;
  int action_at(const std::vector<int>& state) const;
};

struct DpConfig {
  int bound = 0;  // 0 picks a default from lambda and L
  bool adaptive = true;  // widen the bound until the audit passes
  double tolerance = 1e-8;
  double boundary_tolerance = 1e-6;
  int max_iterations = 200000;
};

// Relative value iteration for the single-store lost-demand problem with
// Poisson demand. Throws TruncationError when the stationary mass of states
// whose order is clipped by the bound exceeds the audit tolerance.
DpResult dp_lost_demand(double lambda, double p, double h, int L, const DpConfig& cfg = {});

// Looks up the DP greedy action after rounding the state to the lattice.
class DpPolicy : public Policy {
 public:
  explicit DpPolicy(DpResult table);
  Action act(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const override;
  ParamSet& params() override { return ps_; }
  const ParamSet& params() const override { return ps_; }
  std::string kind() const override { return "dp"; }

 private:
  DpResult table_;
  ParamSet ps_;
};

struct CbsResult {
  double level = 0.0;
  double cap = 0.0;
  double cost = 0.0;  // on the search scenarios
  int evaluations = 0;
};

// Integer grid search over (S, r) followed by coordinate refinement. With
// integer_levels the refinement stays on the integer lattice, matching
// integer-valued demand and the integer action set of the DP; otherwise it
// continues down to quarter steps.
CbsResult cbs_search(const ProblemInstance& inst, const TraceStore& scenarios,
                     const EvalSpec& spec, double demand_mean, bool integer_levels = true);

struct EchelonSearchConfig {
  std::vector<double> start_scales{0.8, 1.0, 1.25};
  TrainConfig train;
};

struct EchelonResult {
  std::vector<double> levels;
  double cost = 0.0;  // dev cost of the best start
  std::vector<double> start_costs;
};

// Multi-start gradient descent on the echelon levels through the simulator.
EchelonResult echelon_search(const ProblemInstance& inst, const TraceStore& train,
                             const TraceStore& dev, double demand_mean,
                             const EchelonSearchConfig& cfg);

struct TransshipmentBound {
  double mu_G = 0.0;
  double sigma_G = 0.0;
  double S0 = 0.0;
  double s_hat = 0.0;
  double total = 0.0;      // per period, summed over stores
  double per_store = 0.0;  // divided by K
};

TransshipmentBound transshipment_bound(int K, double p, double h, int L0, int L1,
                                       const std::vector<double>& mu, const Mat& Sigma);

// Covariance with constant pairwise correlation rho.
Mat constant_correlation_cov(const std::vector<double>& sigma, double rho);

struct MonteCarloEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  long samples = 0;
};

// Simulates the relaxed system in which stores may exchange inventory freely:
// the echelon position is raised to S0, and after the warehouse lead time the
// available units are rebalanced across stores to a common standardized level.
// Estimates the per-period cost summed over stores.
MonteCarloEstimate simulate_relaxed_transshipment(int K, double p, double h, int L0, int L1,
                                                  const std::vector<double>& mu,
                                                  const Mat& Sigma, double S0, long samples,
                                                  std::uint64_t seed);

// JSON file mapping fingerprint -> oracle result.
class OracleCache {
 public:
  explicit OracleCache(std::string path);
  bool has(const std::string& key) const;
  nlohmann::json get(const std::string& key) const;
  void put(const std::string& key, const nlohmann::json& value);

 private:
  std::string path_;
  nlohmann::json data_ = nlohmann::json::object();
};

}  // namespace hdlab
