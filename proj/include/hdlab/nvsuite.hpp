#pragma once

// Quantile forecaster, generalized newsvendor policies and profit accounting
// for the single-store benchmark with nonstationary demand.
//
// Grid layout: column m * Q + j holds the tau_j quantile of the sum of the
// next horizons[m] demands, Q = 19 levels 0.05, 0.10, ..., 0.95.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hdlab/envsim.hpp"
#include "hdlab/policies.hpp"
#include "hdlab/scenarios.hpp"
#include "hdlab/trainer.hpp"

namespace hdlab::nv {

constexpr int kLookback = 16;

const std::vector<double>& quantile_levels();

// Mean over rows of sum_tau sum_m max{tau (y_m - g_{m,tau}), (1 - tau)(g_{m,tau} - y_m)}.
// y is rows x M, grid rows x (M * taus.size()).
double pinball_loss(const Mat& y, const Mat& grid, const std::vector<double>& taus);
Var pinball_loss(Var grid, const Mat& y, const std::vector<double>& taus);

// Sorts every horizon block of each row.
Mat monotone_rearrange(const Mat& grid, int n_tau);

// Piecewise-linear through (taus[j], knots[j]); the end segments extend past the outer knots.
double quantile_at(std::span<const double> knots, const std::vector<double>& taus, double tau);

struct InverseQuantile {
  double tau = 0.5;
  bool degenerate = false;
};

// Inverse of quantile_at on a sorted row. A row with all knots equal yields 0.5, flagged.
InverseQuantile inverse_quantile(std::span<const double> knots, const std::vector<double>& taus,
                                 double v);

// Differentiable in tau (rows x 1); knots is rows x taus.size() and held constant.
Var quantile_at(Var tau, const Mat& knots, const std::vector<double>& taus);

struct ForecasterConfig {
  std::vector<int> hidden{128, 128};
  std::vector<int> horizons{5, 6, 7};
  std::uint64_t seed = 1;
};

class QuantileForecaster {
 public:
  explicit QuantileForecaster(const ForecasterConfig& cfg = {});
  // inputs: rows x (kLookback + 1), past demands oldest first, then days to the anchor.
  Var forward(Tape& tape, const std::vector<Var>& theta, const Mat& inputs) const;
  // Network normalization: rows x 1 demand scale used for inputs and outputs.
  static Eigen::VectorXd input_scale(const Mat& inputs);
  // Rearranged grid, rows x grid_cols().
  Mat predict(const Mat& inputs) const;
  int n_tau() const { return static_cast<int>(quantile_levels().size()); }
  int grid_cols() const { return n_tau() * static_cast<int>(cfg_.horizons.size()); }
  const std::vector<int>& horizons() const { return cfg_.horizons; }
  // Index of horizon m in the grid, or -1.
  int horizon_index(int m) const;
  ParamSet& params() { return ps_; }
  const ParamSet& params() const { return ps_; }
  const ForecasterConfig& config() const { return cfg_; }

 private:
  Mat features(const Mat& inputs, const Eigen::VectorXd& scale) const;
  ForecasterConfig cfg_;
  ParamSet ps_;
  Mlp net_;
};

struct ForecastSamples {
  Mat inputs;   // rows x (kLookback + 1)
  Mat targets;  // rows x horizons, sums of the next m demands
};

// Every window of kLookback demands followed by max(horizons) periods, in trace order.
ForecastSamples forecast_samples(const TraceStore& store, const std::vector<int>& horizons,
                                 int stride = 1);

struct ForecastTrainConfig {
  int batch_size = 1024;
  double learning_rate = 1e-3;
  long steps = 2000;
  long eval_every = 250;
  std::uint64_t seed = 1;
};

struct ForecastTrainResult {
  double train_loss = 0.0;
  double dev_loss = 0.0;
  long best_steps = 0;
};

// Minimizes the pinball loss of scaled targets; keeps the best dev parameters.
ForecastTrainResult train_forecaster(QuantileForecaster& f, const ForecastSamples& train,
                                     const ForecastSamples& dev, const ForecastTrainConfig& cfg);

// coverage[m][j]: share of targets at or below the predicted tau_j quantile.
std::vector<std::vector<double>> calibration(const QuantileForecaster& f,
                                             const ForecastSamples& samples);

// Writes the rearranged grid of every period t >= 0 into store.aux. Needs
// store.history >= kLookback and anchor days.
void attach_forecasts(TraceStore& store, const QuantileForecaster& f);

enum class GnKind { newsvendor, fixed_quantile, transformed_newsvendor, returns_newsvendor, just_in_time };

GnKind gn_kind_from_string(const std::string& s);
std::string to_string(GnKind k);
// Admissible kinds place nonnegative orders and do not see future demand.
bool admissible(GnKind k);

struct GnConfig {
  GnKind kind = GnKind::newsvendor;
  std::vector<int> horizons{5, 6, 7};
  std::vector<int> transform_hidden{16, 16};
  double init_tau = 0.5;  // fixed_quantile start
  std::uint64_t seed = 1;
};

// Orders up to H(L, F_t)^-1(tau) from the forecast grid carried in the batch's
// exogenous features (see attach_forecasts).
class GnPolicy : public Policy {
 public:
  explicit GnPolicy(const GnConfig& cfg);
  Action act(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const override;
  ParamSet& params() override { return ps_; }
  const ParamSet& params() const override { return ps_; }
  std::string kind() const override { return to_string(cfg_.kind); }
  GnKind gn_kind() const { return cfg_.kind; }
  // Target quantile per row, rows x 1.
  Var target_tau(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const;
  // Forecast knots of horizon L + 1 for every row at period t.
  Mat knots(const Observation& obs) const;
  double fixed_tau() const;

 private:
  GnConfig cfg_;
  ParamSet ps_;
  Mlp transform_;
};

struct LookbackConfig {
  std::vector<int> hidden{64, 64};
  std::uint64_t seed = 1;
};

// HDPO network for the benchmark: inventory state, the last kLookback demands,
// days to the anchor and the critical ratio, normalized by the recent demand level.
class LookbackPolicy : public Policy {
 public:
  LookbackPolicy(const ProblemInstance& inst, const LookbackConfig& cfg);
  Action act(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const override;
  ParamSet& params() override { return ps_; }
  const ParamSet& params() const override { return ps_; }
  std::string kind() const override { return "lookback"; }

 private:
  int slots_ = 0;
  ParamSet ps_;
  Mlp net_;
};

// Poisson demand around base * (1 + amp sin(2 pi (t + phase) / 52)) with a
// bump of relative size `spike` near the anchor date.
struct SeasonalConfig {
  double base_lo = 3.0, base_hi = 12.0;
  double amp_lo = 0.2, amp_hi = 0.6;
  double spike_lo = 0.5, spike_hi = 2.0;
  double spike_width_days = 21.0;
  int history = kLookback;
  bool sample_primitives = true;
  PrimitiveMeta meta{2.0, 4, 6, 1.0};
};

TraceStore seasonal_traces(const SeasonalConfig& cfg, int H, int T, std::uint64_t seed,
                           const std::string& split);

// Instance for stores built by seasonal_traces: lead set to the largest sampled value.
ProblemInstance seasonal_instance(const SeasonalConfig& cfg, DemandMode mode);

// HDPO on the quantile-defining parameters with the forecaster frozen. The
// first kLookback actions carry no gradient and their costs are not counted.
TrainResult train_downstream(GnPolicy& policy, const TraceStore& train, const TraceStore& dev,
                             const ProblemInstance& inst, TrainConfig cfg);

struct ProfitRow {
  int scenario = 0;
  int week = 0;
  double revenue = 0.0;
  double holding = 0.0;
  double implied_quantile = 0.0;
  double stockout_ratio = 0.0;  // NaN when the order arrives after the horizon
};

struct ProfitReport {
  std::string policy;
  double profit = 0.0;   // per scenario-week
  double revenue = 0.0;  // per scenario-week
  double holding = 0.0;  // per scenario-week
  double cost = 0.0;     // per scenario-week, underage + holding
  std::vector<ProfitRow> rows;
  // scenario,week,revenue,holding_cost,implied_quantile,stockout_ratio with the
  // implied quantile standardized per scenario over the evaluation window.
  std::string csv() const;
};

// Revenue p min(xi, I), holding h (I - xi)+, over periods [burn_in, horizon).
// Per-row diagnostics need a forecast grid in the store.
ProfitReport evaluate_profit(const Policy& policy, const TraceStore& store,
                             const ProblemInstance& inst, int horizon, int burn_in,
                             bool with_rows = false,
                             const std::vector<int>& horizons = {5, 6, 7});

}  // namespace hdlab::nv
