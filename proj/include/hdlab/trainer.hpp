#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdlab/envsim.hpp"
#include "hdlab/scenarios.hpp"

namespace hdlab {

struct TrainConfig {
  int batch_size = 1024;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long max_gradient_steps = 1000;
  long max_epochs = 1000000;
  // Dev evaluations without improvement before stopping; 0 disables.
  int patience = 0;
  // Evaluate dev every this many gradient steps; 0 means once per epoch.
  long eval_every = 0;
  int train_T = 50, train_burn_in = 30;
  int dev_T = 50, dev_burn_in = 30;
  int test_T = 500, test_burn_in = 300;
  // Actions before this period carry no gradient.
  int grad_start = 0;
  // Round orders at evaluation time only.
  bool round_eval = false;
  // Rows per tape; fixes the reduction order so results do not depend on threads.
  int shard_rows = 128;
  int parallelism = 1;
  std::uint64_t shuffle_seed = 1;
};

struct EvalRecord {
  long epoch = 0;
  long steps = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double seconds = 0.0;
};

struct RunRecord {
  std::string fingerprint;
  nlohmann::json seeds = nlohmann::json::object();
  std::vector<EvalRecord> evals;
  double best_dev = 0.0;
  long best_steps = 0;
  long best_epoch = 0;
  long steps = 0;
  long epochs = 0;
  double wall_seconds = 0.0;
  std::string stop_reason;
  nlohmann::json test = nlohmann::json::object();

  nlohmann::json to_json() const;
  // Deterministic columns only: epoch, train_loss, dev_loss, steps.
  std::string metrics_csv() const;
  // Adds wall-clock seconds.
  std::string progress_csv() const;
};

struct TrainResult {
  ParamSet best;
  RunRecord record;
};

using ProgressFn = std::function<void(const EvalRecord&)>;

// Trains `policy` in place; on return the policy holds the best-dev parameters.
TrainResult hdpo_train(Policy& policy, const TraceStore& train, const TraceStore& dev,
                       const ProblemInstance& inst, const TrainConfig& cfg,
                       const ProgressFn& progress = {});

struct EvalSpec {
  int horizon = 50;
  int burn_in = 30;
  bool round_actions = false;
  int shard_rows = 256;
  int parallelism = 1;
};

// Mean cost per store-period over all scenarios in the store; no gradient kept.
double evaluate(const Policy& policy, const TraceStore& store, const ProblemInstance& inst,
                const EvalSpec& spec);

// Per-scenario total cost over counted periods.
Eigen::VectorXd evaluate_scenarios(const Policy& policy, const TraceStore& store,
                                   const ProblemInstance& inst, const EvalSpec& spec);

// Mean per-store-period loss and its gradient for the given scenario ids.
struct BatchGradient {
  double loss = 0.0;
  std::vector<Mat> grads;
};
BatchGradient batch_gradient(const Policy& policy, const TraceStore& store,
                             const ProblemInstance& inst, const std::vector<int>& ids,
                             int horizon, int burn_in, int grad_start, int shard_rows,
                             int parallelism);

// Runs fn(i) for i in [0, n) on up to `parallelism` threads.
void parallel_for(int n, int parallelism, const std::function<void(int)>& fn);

}  // namespace hdlab
