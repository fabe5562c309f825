#include "hdlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace hdlab {

void parallel_for(int n, int parallelism, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(parallelism, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

namespace {

std::vector<std::vector<int>> shard(const std::vector<int>& ids, int shard_rows) {
  std::vector<std::vector<int>> out;
  const int n = static_cast<int>(ids.size());
  const int step = std::max(1, shard_rows);
  for (int i = 0; i < n; i += step)
    out.emplace_back(ids.begin() + i, ids.begin() + std::min(n, i + step));
  return out;
}

bool all_finite(const std::vector<Mat>& g) {
  for (const Mat& m : g)
    if (!m.allFinite()) return false;
  return true;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

BatchGradient batch_gradient(const Policy& policy, const TraceStore& store,
                             const ProblemInstance& inst, const std::vector<int>& ids,
                             int horizon, int burn_in, int grad_start, int shard_rows,
                             int parallelism) {
  if (ids.empty()) throw ConfigError("batch_gradient: empty batch");
  auto shards = shard(ids, shard_rows);
  const double denom = static_cast<double>(ids.size()) * (horizon - burn_in) * inst.demand_cols();
  std::vector<BatchGradient> parts(shards.size());
  parallel_for(static_cast<int>(shards.size()), parallelism, [&](int s) {
    ScenarioBatch b = make_batch(store, inst, shards[s], horizon);
    Tape tape;
    RolloutSpec rs;
    rs.horizon = horizon;
    rs.burn_in = burn_in;
    rs.grad_start = grad_start;
    RolloutOutput r = rollout(tape, policy, b, inst, rs);
    Var root = scale(sum_all(r.scenario_cost), 1.0 / denom);
    tape.backward(root);
    parts[s].loss = root.value()(0, 0);
    parts[s].grads = tape.param_grads(policy.params());
  });
  BatchGradient out;
  out.grads = policy.params().zeros_like();
  for (const auto& p : parts) {
    out.loss += p.loss;
    for (std::size_t i = 0; i < out.grads.size(); ++i) out.grads[i] += p.grads[i];
  }
  return out;
}

Eigen::VectorXd evaluate_scenarios(const Policy& policy, const TraceStore& store,
                                   const ProblemInstance& inst, const EvalSpec& spec) {
  std::vector<int> ids(store.H);
  std::iota(ids.begin(), ids.end(), 0);
  auto shards = shard(ids, spec.shard_rows);
  std::vector<Mat> parts(shards.size());
  parallel_for(static_cast<int>(shards.size()), spec.parallelism, [&](int s) {
    ScenarioBatch b = make_batch(store, inst, shards[s], spec.horizon);
    Tape tape;
    RolloutSpec rs;
    rs.horizon = spec.horizon;
    rs.burn_in = spec.burn_in;
    rs.record = false;
    rs.round_actions = spec.round_actions;
    parts[s] = rollout(tape, policy, b, inst, rs).scenario_cost_value;
  });
  Eigen::VectorXd out(store.H);
  Eigen::Index at = 0;
  for (const Mat& m : parts) {
    out.segment(at, m.rows()) = m.col(0);
    at += m.rows();
  }
  return out;
}

double evaluate(const Policy& policy, const TraceStore& store, const ProblemInstance& inst,
                const EvalSpec& spec) {
  Eigen::VectorXd c = evaluate_scenarios(policy, store, inst, spec);
  const double denom =
      static_cast<double>(store.H) * (spec.horizon - spec.burn_in) * inst.demand_cols();
  double s = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) s += c(i);
  return s / denom;
}

TrainResult hdpo_train(Policy& policy, const TraceStore& train, const TraceStore& dev,
                       const ProblemInstance& inst, const TrainConfig& cfg,
                       const ProgressFn& progress) {
  if (train.H == 0 || dev.H == 0) throw ConfigError("hdpo_train: empty train or dev set");
  if (cfg.batch_size <= 0) throw ConfigError("hdpo_train: batch_size must be positive");
  if (cfg.train_burn_in >= cfg.train_T || cfg.dev_burn_in >= cfg.dev_T)
    throw ConfigError("hdpo_train: burn-in must be below the horizon");
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const int batch = std::min(cfg.batch_size, train.H);
  AdamConfig adam{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps};
  EvalSpec dev_spec{cfg.dev_T, cfg.dev_burn_in, cfg.round_eval, cfg.shard_rows * 2,
                    cfg.parallelism};
  std::mt19937_64 rng(cfg.shuffle_seed);
  std::vector<int> order(train.H);
  std::iota(order.begin(), order.end(), 0);

  TrainResult res;
  RunRecord& rec = res.record;
  ParamSet& ps = policy.params();
  res.best = ps;
  rec.best_dev = std::numeric_limits<double>::infinity();
  int since_best = 0;
  double loss_sum = 0.0;
  long loss_count = 0;
  long steps = 0, epoch = 0;

  auto run_eval = [&]() -> bool {
    EvalRecord e;
    e.epoch = epoch;
    e.steps = steps;
    e.train_loss = loss_count > 0 ? loss_sum / loss_count : std::nan("");
    e.dev_loss = evaluate(policy, dev, inst, dev_spec);
    if (!std::isfinite(e.dev_loss))
      throw Divergence("dev loss is not finite at step " + std::to_string(steps));
    e.seconds = elapsed();
    loss_sum = 0.0;
    loss_count = 0;
    rec.evals.push_back(e);
    if (progress) progress(e);
    if (e.dev_loss < rec.best_dev) {
      rec.best_dev = e.dev_loss;
      rec.best_steps = steps;
      rec.best_epoch = epoch;
      res.best = ps;
      since_best = 0;
    } else {
      ++since_best;
    }
    return cfg.patience > 0 && since_best >= cfg.patience;
  };

  rec.stop_reason = "max_epochs";
  bool stop = false;
  while (!stop && epoch < cfg.max_epochs) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start + batch <= train.H && !stop; start += batch) {
      std::vector<int> ids(order.begin() + start, order.begin() + start + batch);
      BatchGradient g = batch_gradient(policy, train, inst, ids, cfg.train_T, cfg.train_burn_in,
                                       cfg.grad_start, cfg.shard_rows, cfg.parallelism);
      if (!std::isfinite(g.loss) || !all_finite(g.grads))
        throw Divergence("non-finite loss or gradient at step " + std::to_string(steps) +
                         " (loss " + fmt(g.loss) + ")");
      adam_update(ps, g.grads, adam);
      ++steps;
      loss_sum += g.loss;
      ++loss_count;
      if (cfg.eval_every > 0 && steps % cfg.eval_every == 0 && run_eval()) {
        rec.stop_reason = "patience";
        stop = true;
      }
      if (!stop && steps >= cfg.max_gradient_steps) {
        rec.stop_reason = "max_gradient_steps";
        stop = true;
      }
    }
    ++epoch;
    if (cfg.eval_every == 0 && run_eval() && !stop) {
      rec.stop_reason = "patience";
      stop = true;
    }
  }
  if (cfg.eval_every > 0 && loss_count > 0) run_eval();
  rec.steps = steps;
  rec.epochs = epoch;
  rec.wall_seconds = elapsed();
  ps = res.best;
  return res;
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json ev = nlohmann::json::array();
  for (const auto& e : evals)
    ev.push_back({{"epoch", e.epoch},
                  {"steps", e.steps},
                  {"train_loss", std::isfinite(e.train_loss) ? nlohmann::json(e.train_loss)
                                                             : nlohmann::json(nullptr)},
                  {"dev_loss", e.dev_loss},
                  {"seconds", e.seconds}});
  return {{"fingerprint", fingerprint}, {"seeds", seeds},       {"evals", ev},
          {"best_dev", best_dev},       {"best_steps", best_steps}, {"best_epoch", best_epoch},
          {"steps", steps},             {"epochs", epochs},     {"wall_seconds", wall_seconds},
          {"stop_reason", stop_reason}, {"test", test}};
}

std::string RunRecord::metrics_csv() const {
  std::ostringstream o;
  o << "epoch,train_loss,dev_loss,steps\n";
  for (const auto& e : evals)
    o << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.dev_loss) << ',' << e.steps << '\n';
  return o.str();
}

std::string RunRecord::progress_csv() const {
  std::ostringstream o;
  o << "epoch,train_loss,dev_loss,steps,seconds\n";
  for (const auto& e : evals)
    o << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.dev_loss) << ',' << e.steps << ','
      << fmt(e.seconds) << '\n';
  return o.str();
}

}  // namespace hdlab
