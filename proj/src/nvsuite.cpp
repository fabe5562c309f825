#include "hdlab/nvsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "hdlab/error.hpp"

namespace hdlab::nv {

const std::vector<double>& quantile_levels() {
  static const std::vector<double> levels = [] {
    std::vector<double> v;
    for (int j = 1; j <= 19; ++j) v.push_back(0.05 * j);
    return v;
  }();
  return levels;
}

// ---------------------------------------------------------------- pinball

namespace {

Mat expand_targets(const Mat& y, std::size_t Q) {
  Mat out(y.rows(), y.cols() * static_cast<Eigen::Index>(Q));
  for (Eigen::Index m = 0; m < y.cols(); ++m)
    for (std::size_t j = 0; j < Q; ++j) out.col(m * Q + j) = y.col(m);
  return out;
}

Mat tau_matrix(Eigen::Index rows, Eigen::Index M, const std::vector<double>& taus) {
  const auto Q = static_cast<Eigen::Index>(taus.size());
  Mat out(rows, M * Q);
  for (Eigen::Index m = 0; m < M; ++m)
    for (Eigen::Index j = 0; j < Q; ++j) out.col(m * Q + j).setConstant(taus[j]);
  return out;
}

void check_grid(const Mat& y, Eigen::Index grid_rows, Eigen::Index grid_cols, std::size_t Q) {
  if (y.rows() != grid_rows || y.cols() * static_cast<Eigen::Index>(Q) != grid_cols)
    throw ShapeError("pinball_loss: grid must be rows x (horizons * taus)");
}

}  // namespace

double pinball_loss(const Mat& y, const Mat& grid, const std::vector<double>& taus) {
  check_grid(y, grid.rows(), grid.cols(), taus.size());
  if (y.rows() == 0) return 0.0;
  const Mat diff = expand_targets(y, taus.size()) - grid;
  const Mat tau = tau_matrix(y.rows(), y.cols(), taus);
  const Mat loss = (tau.array() * diff.array()).max((tau.array() - 1.0) * diff.array()).matrix();
  return loss.sum() / static_cast<double>(y.rows());
}

Var pinball_loss(Var grid, const Mat& y, const std::vector<double>& taus) {
  check_grid(y, grid.rows(), grid.cols(), taus.size());
  Tape& t = *grid.tape();
  Var diff = t.constant(expand_targets(y, taus.size())) - grid;
  const Mat tau = tau_matrix(y.rows(), y.cols(), taus);
  Var loss = maximum(mul(diff, t.constant(tau)), mul(diff, t.constant(tau.array() - 1.0)));
  return scale(sum_all(loss), 1.0 / static_cast<double>(std::max<Eigen::Index>(1, y.rows())));
}

Mat monotone_rearrange(const Mat& grid, int n_tau) {
  if (n_tau <= 0 || grid.cols() % n_tau != 0)
    throw ShapeError("monotone_rearrange: columns must be a multiple of the level count");
  Mat out = grid;
  std::vector<double> buf(n_tau);
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index m = 0; m < out.cols() / n_tau; ++m) {
      for (int j = 0; j < n_tau; ++j) buf[j] = out(r, m * n_tau + j);
      std::sort(buf.begin(), buf.end());
      for (int j = 0; j < n_tau; ++j) out(r, m * n_tau + j) = buf[j];
    }
  return out;
}

// ---------------------------------------------------------------- interpolation

namespace {

int segment_of(const std::vector<double>& taus, double tau) {
  const int Q = static_cast<int>(taus.size());
  if (Q < 2) throw ConfigError("quantile interpolation needs at least two levels");
  int j = static_cast<int>(std::upper_bound(taus.begin(), taus.end(), tau) - taus.begin()) - 1;
  return std::clamp(j, 0, Q - 2);
}

}  // namespace

double quantile_at(std::span<const double> knots, const std::vector<double>& taus, double tau) {
  if (knots.size() != taus.size()) throw ShapeError("quantile_at: knots and levels differ in size");
  const int j = segment_of(taus, tau);
  const double slope = (knots[j + 1] - knots[j]) / (taus[j + 1] - taus[j]);
  return knots[j] + slope * (tau - taus[j]);
}

InverseQuantile inverse_quantile(std::span<const double> knots, const std::vector<double>& taus,
                                 double v) {
  if (knots.size() != taus.size() || knots.size() < 2)
    throw ShapeError("inverse_quantile: knots and levels differ in size");
  const int Q = static_cast<int>(knots.size());
  if (knots.front() == knots.back()) return {0.5, true};
  auto through = [&](int j) {
    const double slope = (knots[j + 1] - knots[j]) / (taus[j + 1] - taus[j]);
    return taus[j] + (v - knots[j]) / slope;
  };
  if (v < knots.front()) {
    int j = 0;
    while (knots[j + 1] == knots[j]) ++j;
    return {through(j), false};
  }
  if (v > knots.back()) {
    int j = Q - 2;
    while (knots[j + 1] == knots[j]) --j;
    return {through(j), false};
  }
  for (int j = 0; j + 1 < Q; ++j)
    if (knots[j] <= v && v <= knots[j + 1] && knots[j + 1] > knots[j]) return {through(j), false};
  return {0.5, true};
}

Var quantile_at(Var tau, const Mat& knots, const std::vector<double>& taus) {
  if (tau.cols() != 1 || tau.rows() != knots.rows() ||
      knots.cols() != static_cast<Eigen::Index>(taus.size()))
    throw ShapeError("quantile_at: tau must be rows x 1 and knots rows x levels");
  Tape& t = *tau.tape();
  const Eigen::Index rows = knots.rows();
  Mat out(rows, 1);
  Mat slope(rows, 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double x = tau.value()(r, 0);
    const int j = segment_of(taus, x);
    slope(r, 0) = (knots(r, j + 1) - knots(r, j)) / (taus[j + 1] - taus[j]);
    out(r, 0) = knots(r, j) + slope(r, 0) * (x - taus[j]);
  }
  const int ti = tau.id();
  return t.record(std::move(out), {tau}, [ti, slope](Tape& t, int self) {
    t.accumulate(ti, t.adjoint(self).cwiseProduct(slope));
  });
}

// ---------------------------------------------------------------- forecaster

namespace {

constexpr int kExtra = 4;  // log scale, days, sin, cos

double window_mean(const Mat& inputs, Eigen::Index r) {
  return inputs.row(r).head(kLookback).mean();
}

}  // namespace

QuantileForecaster::QuantileForecaster(const ForecasterConfig& cfg) : cfg_(cfg) {
  if (cfg_.horizons.empty()) throw ConfigError("forecaster: need at least one horizon");
  std::mt19937_64 rng(cfg_.seed);
  net_ = Mlp(ps_, "forecaster", kLookback + kExtra, cfg_.hidden, grid_cols(), rng);
}

int QuantileForecaster::horizon_index(int m) const {
  for (std::size_t i = 0; i < cfg_.horizons.size(); ++i)
    if (cfg_.horizons[i] == m) return static_cast<int>(i);
  return -1;
}

Eigen::VectorXd QuantileForecaster::input_scale(const Mat& inputs) {
  Eigen::VectorXd s(inputs.rows());
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) s(r) = std::max(0.0, window_mean(inputs, r)) + 1.0;
  return s;
}

Mat QuantileForecaster::features(const Mat& inputs, const Eigen::VectorXd& s) const {
  if (inputs.cols() != kLookback + 1)
    throw ShapeError("forecaster: inputs must have " + std::to_string(kLookback + 1) + " columns");
  Mat x(inputs.rows(), kLookback + kExtra);
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    x.row(r).head(kLookback) = inputs.row(r).head(kLookback) / s(r);
    const double days = inputs(r, kLookback);
    const double angle = 2.0 * std::numbers::pi * days / 365.0;
    x(r, kLookback) = std::log(s(r));
    x(r, kLookback + 1) = days / 365.0;
    x(r, kLookback + 2) = std::sin(angle);
    x(r, kLookback + 3) = std::cos(angle);
  }
  return x;
}

Var QuantileForecaster::forward(Tape& tape, const std::vector<Var>& theta, const Mat& inputs) const {
  const Eigen::VectorXd s = input_scale(inputs);
  Var z = net_.forward(theta, tape.constant(features(inputs, s)));
  // Baseline: the recent mean demand times the horizon.
  const int Q = n_tau();
  Mat base(inputs.rows(), grid_cols());
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    const double mean = window_mean(inputs, r);
    for (std::size_t m = 0; m < cfg_.horizons.size(); ++m)
      base.row(r).segment(static_cast<Eigen::Index>(m) * Q, Q).setConstant(cfg_.horizons[m] * mean);
  }
  return mul_col(z, tape.constant(s)) + tape.constant(base);
}

Mat QuantileForecaster::predict(const Mat& inputs) const {
  Tape tape;
  std::vector<Var> theta;
  for (int i = 0; i < ps_.size(); ++i) theta.push_back(tape.constant(ps_.value(i)));
  return monotone_rearrange(forward(tape, theta, inputs).value(), n_tau());
}

ForecastSamples forecast_samples(const TraceStore& store, const std::vector<int>& horizons,
                                 int stride) {
  if (store.demand_cols != 1) throw ConfigError("forecast_samples: single-store traces only");
  if (stride < 1) throw ConfigError("forecast_samples: stride must be positive");
  const int maxm = *std::max_element(horizons.begin(), horizons.end());
  const int len = store.length();
  std::vector<int> starts;
  for (int i = kLookback; i + maxm <= len; i += stride) starts.push_back(i);
  ForecastSamples out;
  const Eigen::Index n = static_cast<Eigen::Index>(starts.size()) * store.H;
  out.inputs.resize(n, kLookback + 1);
  out.targets.resize(n, static_cast<Eigen::Index>(horizons.size()));
  Eigen::Index row = 0;
  for (int h = 0; h < store.H; ++h)
    for (int i : starts) {
      for (int k = 0; k < kLookback; ++k) out.inputs(row, k) = store.d(h, i - kLookback + k, 0);
      out.inputs(row, kLookback) =
          store.anchor_days.empty() ? 0.0 : days_to_anchor(store.anchor_days[h], i);
      for (std::size_t m = 0; m < horizons.size(); ++m) {
        double sum = 0.0;
        for (int k = 0; k < horizons[m]; ++k) sum += store.d(h, i + k, 0);
        out.targets(row, static_cast<Eigen::Index>(m)) = sum;
      }
      ++row;
    }
  return out;
}

namespace {

Mat take_rows(const Mat& m, const std::vector<Eigen::Index>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

// Pinball loss of targets and grid divided by the input scale.
Var scaled_loss(Tape& tape, const QuantileForecaster& f, const std::vector<Var>& theta,
                const Mat& inputs, const Mat& targets) {
  const Eigen::VectorXd s = QuantileForecaster::input_scale(inputs);
  const Eigen::VectorXd inv = s.cwiseInverse();
  Var grid = mul_col(f.forward(tape, theta, inputs), tape.constant(inv));
  Mat y = targets.array().colwise() * inv.array();
  return pinball_loss(grid, y, quantile_levels());
}

double mean_scaled_loss(const QuantileForecaster& f, const ForecastSamples& s) {
  const Eigen::Index n = s.inputs.rows();
  if (n == 0) return 0.0;
  double total = 0.0;
  const Eigen::Index chunk = 4096;
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const Eigen::Index len = std::min(chunk, n - start);
    Tape tape;
    std::vector<Var> theta;
    for (int i = 0; i < f.params().size(); ++i) theta.push_back(tape.constant(f.params().value(i)));
    Var l = scaled_loss(tape, f, theta, s.inputs.middleRows(start, len),
                        s.targets.middleRows(start, len));
    total += l.value()(0, 0) * static_cast<double>(len);
  }
  return total / static_cast<double>(n);
}

}  // namespace

ForecastTrainResult train_forecaster(QuantileForecaster& f, const ForecastSamples& train,
                                     const ForecastSamples& dev, const ForecastTrainConfig& cfg) {
  const Eigen::Index n = train.inputs.rows();
  if (n == 0) throw ConfigError("train_forecaster: no training samples");
  if (train.targets.cols() != static_cast<Eigen::Index>(f.horizons().size()))
    throw ShapeError("train_forecaster: targets do not match the forecaster horizons");
  const Eigen::Index B = std::min<Eigen::Index>(cfg.batch_size, n);
  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8};
  ForecastTrainResult res;
  res.dev_loss = std::numeric_limits<double>::infinity();
  ParamSet best = f.params();
  double last_train = 0.0;
  for (long step = 1; step <= cfg.steps; ++step) {
    if (cursor + static_cast<std::size_t>(B) > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                  order.begin() + static_cast<std::ptrdiff_t>(cursor + B));
    cursor += static_cast<std::size_t>(B);
    Tape tape;
    std::vector<Var> theta = tape.bind(f.params());
    Var loss = scaled_loss(tape, f, theta, take_rows(train.inputs, idx), take_rows(train.targets, idx));
    tape.backward(loss);
    last_train = loss.value()(0, 0);
    if (!std::isfinite(last_train)) throw Divergence("forecaster loss is not finite");
    adam_update(f.params(), tape.param_grads(f.params()), adam);
    if (step % std::max(1L, cfg.eval_every) == 0 || step == cfg.steps) {
      const double d = dev.inputs.rows() > 0 ? mean_scaled_loss(f, dev) : last_train;
      if (d < res.dev_loss) {
        res.dev_loss = d;
        res.best_steps = step;
        res.train_loss = last_train;
        best = f.params();
      }
    }
  }
  f.params() = best;
  return res;
}

std::vector<std::vector<double>> calibration(const QuantileForecaster& f,
                                             const ForecastSamples& samples) {
  const int Q = f.n_tau();
  const int M = static_cast<int>(f.horizons().size());
  std::vector<std::vector<double>> cover(M, std::vector<double>(Q, 0.0));
  const Eigen::Index n = samples.inputs.rows();
  if (n == 0) return cover;
  const Eigen::Index chunk = 4096;
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const Eigen::Index len = std::min(chunk, n - start);
    Mat g = f.predict(samples.inputs.middleRows(start, len));
    for (Eigen::Index r = 0; r < len; ++r)
      for (int m = 0; m < M; ++m)
        for (int j = 0; j < Q; ++j)
          if (samples.targets(start + r, m) <= g(r, m * Q + j)) cover[m][j] += 1.0;
  }
  for (auto& row : cover)
    for (double& c : row) c /= static_cast<double>(n);
  return cover;
}

void attach_forecasts(TraceStore& store, const QuantileForecaster& f) {
  if (store.history < kLookback)
    throw ConfigError("attach_forecasts: need at least " + std::to_string(kLookback) +
                      " periods of history");
  if (store.demand_cols != 1) throw ConfigError("attach_forecasts: single-store traces only");
  const int len = store.length();
  const int G = f.grid_cols();
  store.aux_dim = G;
  store.aux.assign(static_cast<std::size_t>(store.H) * len * G, 0.0);
  const int per_trace = len - store.history;
  const Eigen::Index n = static_cast<Eigen::Index>(store.H) * per_trace;
  const Eigen::Index chunk = 4096;
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const Eigen::Index rows = std::min(chunk, n - start);
    Mat in(rows, kLookback + 1);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const int h = static_cast<int>((start + r) / per_trace);
      const int i = store.history + static_cast<int>((start + r) % per_trace);
      for (int k = 0; k < kLookback; ++k) in(r, k) = store.d(h, i - kLookback + k, 0);
      in(r, kLookback) = store.anchor_days.empty() ? 0.0 : days_to_anchor(store.anchor_days[h], i);
    }
    Mat g = f.predict(in);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const std::size_t h = static_cast<std::size_t>((start + r) / per_trace);
      const std::size_t i = static_cast<std::size_t>(store.history + (start + r) % per_trace);
      double* dst = &store.aux[(h * len + i) * G];
      for (int c = 0; c < G; ++c) dst[c] = g(r, c);
    }
  }
}

// ---------------------------------------------------------------- GN policies

GnKind gn_kind_from_string(const std::string& s) {
  if (s == "newsvendor") return GnKind::newsvendor;
  if (s == "fixed_quantile") return GnKind::fixed_quantile;
  if (s == "transformed_newsvendor") return GnKind::transformed_newsvendor;
  if (s == "returns_newsvendor") return GnKind::returns_newsvendor;
  if (s == "just_in_time") return GnKind::just_in_time;
  throw ConfigError("unknown generalized newsvendor kind: " + s);
}

std::string to_string(GnKind k) {
  switch (k) {
    case GnKind::newsvendor: return "newsvendor";
    case GnKind::fixed_quantile: return "fixed_quantile";
    case GnKind::transformed_newsvendor: return "transformed_newsvendor";
    case GnKind::returns_newsvendor: return "returns_newsvendor";
    case GnKind::just_in_time: return "just_in_time";
  }
  return "?";
}

bool admissible(GnKind k) {
  return k != GnKind::returns_newsvendor && k != GnKind::just_in_time;
}

GnPolicy::GnPolicy(const GnConfig& cfg) : cfg_(cfg) {
  if (cfg_.kind == GnKind::fixed_quantile) {
    if (!(cfg_.init_tau > 0.0 && cfg_.init_tau < 1.0))
      throw ConfigError("fixed_quantile: init_tau must lie in (0, 1)");
    ps_.add("tau_logit", Mat::Constant(1, 1, std::log(cfg_.init_tau / (1.0 - cfg_.init_tau))));
  } else if (cfg_.kind == GnKind::transformed_newsvendor) {
    std::mt19937_64 rng(cfg_.seed);
    transform_ = Mlp(ps_, "transform", 1, cfg_.transform_hidden, 1, rng);
    transform_.zero_output(ps_);
  }
}

double GnPolicy::fixed_tau() const {
  if (cfg_.kind != GnKind::fixed_quantile) throw ConfigError("fixed_tau: not a fixed_quantile policy");
  return 1.0 / (1.0 + std::exp(-ps_.value(0)(0, 0)));
}

Mat GnPolicy::knots(const Observation& obs) const {
  const ScenarioBatch& b = obs.batch;
  const int Q = static_cast<int>(quantile_levels().size());
  const int M = static_cast<int>(cfg_.horizons.size());
  const std::size_t idx = static_cast<std::size_t>(obs.t + b.history);
  if (b.exo.size() <= idx || b.exo[idx].cols() != 1 + Q * M)
    throw ConfigError("generalized newsvendor policy needs an attached forecast grid with " +
                      std::to_string(M) + " horizons");
  const Mat& e = b.exo[idx];
  Mat out(b.rows, Q);
  for (int r = 0; r < b.rows; ++r) {
    const int m = b.lead(r, 0) + 1;
    auto it = std::find(cfg_.horizons.begin(), cfg_.horizons.end(), m);
    if (it == cfg_.horizons.end())
      throw ConfigError("forecast grid has no horizon " + std::to_string(m));
    const int mi = static_cast<int>(it - cfg_.horizons.begin());
    out.row(r) = e.row(r).segment(1 + mi * Q, Q);
  }
  return out;
}

Var GnPolicy::target_tau(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const {
  const ScenarioBatch& b = obs.batch;
  Mat nv(b.rows, 1);
  for (int r = 0; r < b.rows; ++r) nv(r, 0) = b.p(r, 0) / (b.p(r, 0) + b.h(r, 0));
  switch (cfg_.kind) {
    case GnKind::fixed_quantile:
      return sigmoid(matmul(tape.constant(Mat::Ones(b.rows, 1)), theta[0]));
    case GnKind::transformed_newsvendor: {
      Mat logit = (nv.array() / (1.0 - nv.array())).log().matrix();
      return sigmoid(tape.constant(logit) + transform_.forward(theta, tape.constant(nv)));
    }
    default:
      return tape.constant(nv);
  }
}

Action GnPolicy::act(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const {
  const ScenarioBatch& b = obs.batch;
  Action a;
  if (cfg_.kind == GnKind::just_in_time) {
    Mat q(b.rows, 1);
    for (int r = 0; r < b.rows; ++r) {
      const int target = obs.t + b.lead(r, 0);
      if (target >= b.horizon())
        throw ConfigError("just_in_time: demand of period " + std::to_string(target) +
                          " lies beyond the trace");
      q(r, 0) = b.demand_at(target)(r, 0);
    }
    a.orders = tape.constant(std::move(q));
    return a;
  }
  Var X = obs.state.on_hand;
  for (const Var& p : obs.state.pipeline) X = X + p;
  Var level = quantile_at(target_tau(tape, theta, obs), knots(obs), quantile_levels());
  Var gap = level - X;
  a.orders = cfg_.kind == GnKind::returns_newsvendor ? gap : relu(gap);
  return a;
}

// ---------------------------------------------------------------- lookback policy

namespace {

constexpr int kLookbackExtra = 5;  // log scale, days, sin, cos, critical ratio

}  // namespace

LookbackPolicy::LookbackPolicy(const ProblemInstance& inst, const LookbackConfig& cfg)
    : slots_(inst.pipeline_slots()) {
  if (inst.topology != Topology::single_store)
    throw ConfigError("lookback policy: single store only");
  std::mt19937_64 rng(cfg.seed);
  net_ = Mlp(ps_, "lookback", 1 + slots_ + kLookback + kLookbackExtra, cfg.hidden, 1, rng);
}

Action LookbackPolicy::act(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const {
  const ScenarioBatch& b = obs.batch;
  if (b.history < kLookback)
    throw ConfigError("lookback policy: traces need " + std::to_string(kLookback) +
                      " periods of history");
  if (static_cast<int>(obs.state.pipeline.size()) != slots_)
    throw ShapeError("lookback policy: pipeline slots do not match the instance");
  const int rows = b.rows;
  Mat window(rows, kLookback);
  for (int k = 0; k < kLookback; ++k) window.col(k) = b.demand_at(obs.t - kLookback + k).col(0);
  Eigen::VectorXd s = window.rowwise().mean().array().max(0.0) + 1.0;
  Eigen::VectorXd inv = s.cwiseInverse();
  const std::size_t idx = static_cast<std::size_t>(obs.t + b.history);
  Mat extra(rows, kLookback + kLookbackExtra);
  for (int r = 0; r < rows; ++r) {
    extra.row(r).head(kLookback) = window.row(r) * inv(r);
    const double days = b.exo.size() > idx ? b.exo[idx](r, 0) : 0.0;
    const double angle = 2.0 * std::numbers::pi * days / 365.0;
    extra(r, kLookback) = std::log(s(r));
    extra(r, kLookback + 1) = days / 365.0;
    extra(r, kLookback + 2) = std::sin(angle);
    extra(r, kLookback + 3) = std::cos(angle);
    extra(r, kLookback + 4) = b.p(r, 0) / (b.p(r, 0) + b.h(r, 0));
  }
  std::vector<Var> inv_parts{obs.state.on_hand};
  for (const Var& p : obs.state.pipeline) inv_parts.push_back(p);
  Var state = mul_col(concat_cols(inv_parts), tape.constant(inv));
  Var x = concat_cols({state, tape.constant(std::move(extra))});
  Var z = net_.forward(theta, x);
  Action a;
  a.orders = mul_col(softplus(z + 1.0), tape.constant(s));
  return a;
}

// ---------------------------------------------------------------- synthetic benchmark

namespace {

std::uint64_t split_stream(const std::string& split) {
  if (split == "train") return 7100;
  if (split == "dev") return 7200;
  if (split == "test") return 7300;
  return 7400;
}

}  // namespace

TraceStore seasonal_traces(const SeasonalConfig& cfg, int H, int T, std::uint64_t seed,
                           const std::string& split) {
  if (H < 0 || T < 1 || cfg.history < 0) throw ConfigError("seasonal_traces: invalid sizes");
  if (!(cfg.base_lo > 0 && cfg.base_lo <= cfg.base_hi) || cfg.amp_lo < 0 || cfg.amp_hi < cfg.amp_lo ||
      cfg.amp_hi >= 1.0 || cfg.spike_lo < 0 || cfg.spike_hi < cfg.spike_lo ||
      !(cfg.spike_width_days > 0))
    throw ConfigError("seasonal_traces: invalid demand ranges");
  const std::uint64_t stream = split_stream(split);
  TraceStore s;
  s.split = split;
  s.T = T;
  s.history = cfg.history;
  s.demand_cols = 1;
  s.loc_cols = 1;
  s.H = H;
  const int len = s.length();
  s.demand.resize(static_cast<std::size_t>(H) * len);
  s.anchor_days.resize(H);
  for (int h = 0; h < H; ++h) {
    std::mt19937_64 rng = derived_rng(seed, stream, static_cast<std::uint64_t>(h));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double base = cfg.base_lo + (cfg.base_hi - cfg.base_lo) * u(rng);
    const double amp = cfg.amp_lo + (cfg.amp_hi - cfg.amp_lo) * u(rng);
    const double spike = cfg.spike_lo + (cfg.spike_hi - cfg.spike_lo) * u(rng);
    const double phase = 52.0 * u(rng);
    const double anchor = std::floor(365.0 * u(rng));
    s.anchor_days[h] = anchor;
    for (int t = 0; t < len; ++t) {
      const double days = days_to_anchor(anchor, t);
      const double dist = std::min(days, 365.0 - days);
      const double lam = base * (1.0 + amp * std::sin(2.0 * std::numbers::pi * (t + phase) / 52.0)) *
                         (1.0 + spike * std::exp(-dist * dist / (2.0 * cfg.spike_width_days *
                                                                 cfg.spike_width_days)));
      std::poisson_distribution<int> pd(lam);
      s.d(h, t, 0) = static_cast<double>(pd(rng));
    }
    s.trace_ids.push_back(split + "-" + std::to_string(h));
  }
  if (cfg.sample_primitives) {
    SampledPrimitives prim = sample_primitives(cfg.meta, H, seed + stream);
    s.p = prim.p;
    s.lead = prim.lead;
    s.slots = std::max(0, cfg.meta.lead_max - 1);
  }
  s.on_hand.assign(H, 0.0);
  s.pipeline.assign(static_cast<std::size_t>(H) * s.slots, 0.0);
  s.wh_on_hand.assign(H, 0.0);
  return s;
}

ProblemInstance seasonal_instance(const SeasonalConfig& cfg, DemandMode mode) {
  ProblemInstance inst;
  inst.topology = Topology::single_store;
  inst.mode = mode;
  inst.K = 1;
  inst.p = {cfg.meta.p_hat};
  inst.h = {cfg.meta.h};
  inst.lead = {cfg.sample_primitives ? cfg.meta.lead_max : cfg.meta.lead_min};
  inst.validate();
  return inst;
}

TrainResult train_downstream(GnPolicy& policy, const TraceStore& train, const TraceStore& dev,
                             const ProblemInstance& inst, TrainConfig cfg) {
  if (policy.gn_kind() != GnKind::fixed_quantile &&
      policy.gn_kind() != GnKind::transformed_newsvendor)
    throw ConfigError("train_downstream: only fixed_quantile and transformed_newsvendor have parameters");
  if (train.aux.empty() || dev.aux.empty())
    throw ConfigError("train_downstream: attach a frozen forecast grid to both splits first");
  if (cfg.train_T <= kLookback || cfg.dev_T <= kLookback)
    throw ConfigError("train_downstream: horizons must exceed " + std::to_string(kLookback));
  cfg.grad_start = kLookback;
  cfg.train_burn_in = kLookback;
  cfg.dev_burn_in = kLookback;
  return hdpo_train(policy, train, dev, inst, cfg);
}

// ---------------------------------------------------------------- profit accounting

ProfitReport evaluate_profit(const Policy& policy, const TraceStore& store,
                             const ProblemInstance& inst, int horizon, int burn_in,
                             bool with_rows, const std::vector<int>& horizons) {
  if (inst.topology != Topology::single_store)
    throw ConfigError("evaluate_profit: single store only");
  std::vector<int> ids(store.H);
  std::iota(ids.begin(), ids.end(), 0);
  ScenarioBatch b = make_batch(store, inst, ids, store.T);
  const int B = b.rows;
  const int W = horizon - burn_in;
  Mat revenue = Mat::Zero(B, horizon), holding = Mat::Zero(B, horizon), cost = Mat::Zero(B, horizon);
  Mat shortfall = Mat::Zero(B, horizon), implied = Mat::Zero(B, horizon);
  const bool grid = with_rows && !store.aux.empty();
  const int Q = static_cast<int>(quantile_levels().size());
  if (grid && store.aux_dim != Q * static_cast<int>(horizons.size()))
    throw ConfigError("evaluate_profit: forecast grid does not match the horizons");
  RolloutSpec spec;
  spec.horizon = horizon;
  spec.burn_in = burn_in;
  spec.record = false;
  spec.observer = [&](const PeriodRecord& rec) {
    const Mat& sales = rec.out.sales.value();
    const Mat& hold = rec.out.holding.value();
    const Mat& c = rec.out.cost.value();
    for (int r = 0; r < B; ++r) {
      revenue(r, rec.t) = b.p(r, 0) * sales(r, 0);
      holding(r, rec.t) = hold(r, 0);
      cost(r, rec.t) = c(r, 0);
      shortfall(r, rec.t) = rec.demand(r, 0) - sales(r, 0);
    }
    if (!grid) return;
    const Mat& e = b.exo[static_cast<std::size_t>(rec.t + b.history)];
    Eigen::VectorXd X = rec.state.on_hand.value().col(0);
    for (const Var& p : rec.state.pipeline) X += p.value().col(0);
    const Mat& q = rec.action.orders.value();
    for (int r = 0; r < B; ++r) {
      if (!(q(r, 0) > 0.0)) continue;
      auto it = std::find(horizons.begin(), horizons.end(), b.lead(r, 0) + 1);
      if (it == horizons.end()) throw ConfigError("evaluate_profit: no forecast for lead time");
      const int mi = static_cast<int>(it - horizons.begin());
      std::vector<double> k(Q);
      for (int j = 0; j < Q; ++j) k[j] = e(r, 1 + mi * Q + j);
      implied(r, rec.t) = inverse_quantile(k, quantile_levels(), q(r, 0) + X(r)).tau;
    }
  };
  Tape tape;
  rollout(tape, policy, b, inst, spec);
  ProfitReport rep;
  rep.policy = policy.kind();
  const double n = static_cast<double>(B) * W;
  rep.revenue = revenue.rightCols(W).sum() / n;
  rep.holding = holding.rightCols(W).sum() / n;
  rep.cost = cost.rightCols(W).sum() / n;
  rep.profit = rep.revenue - rep.holding;
  if (!with_rows) return rep;
  for (int r = 0; r < B; ++r) {
    double mean_d = 0.0;
    for (int t = burn_in; t < horizon; ++t) mean_d += b.demand_at(t)(r, 0);
    mean_d /= W;
    const double mu = implied.row(r).segment(burn_in, W).mean();
    const double var =
        (implied.row(r).segment(burn_in, W).array() - mu).square().sum() / std::max(1, W - 1);
    const double sd = std::sqrt(var);
    const int L = b.lead(r, 0);
    for (int t = burn_in; t < horizon; ++t) {
      ProfitRow row;
      row.scenario = r;
      row.week = t;
      row.revenue = revenue(r, t);
      row.holding = holding(r, t);
      row.implied_quantile = sd > 0 ? (implied(r, t) - mu) / sd : 0.0;
      if (t + L <= horizon && mean_d > 0) {
        row.stockout_ratio = shortfall.row(r).segment(t, L).sum() / (L * mean_d);
      } else {
        row.stockout_ratio = std::numeric_limits<double>::quiet_NaN();
      }
      rep.rows.push_back(row);
    }
  }
  return rep;
}

std::string ProfitReport::csv() const {
  std::ostringstream o;
  o << "scenario,week,revenue,holding_cost,implied_quantile,stockout_ratio\n";
  char buf[256];
  for (const ProfitRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.10g,%.10g,%.10g,", r.scenario, r.week, r.revenue,
                  r.holding, r.implied_quantile);
    o << buf;
    if (std::isfinite(r.stockout_ratio)) {
      std::snprintf(buf, sizeof buf, "%.10g", r.stockout_ratio);
      o << buf;
    }
    o << '\n';
  }
  return o.str();
}

}  // namespace hdlab::nv
