#include "hdlab/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

namespace hdlab {

namespace {

void require_single_store(const Observation& obs, const char* who) {
  if (obs.inst.topology != Topology::single_store)
    throw ConfigError(std::string(who) + " supports the single-store topology only");
}

ParamSet scalar_params(std::initializer_list<std::pair<const char*, double>> vals) {
  ParamSet ps;
  for (const auto& [name, v] : vals) ps.add(name, Mat::Constant(1, 1, v));
  return ps;
}

}  // namespace

Var inventory_position(const SystemState& s) {
  Var x = s.on_hand;
  for (const Var& q : s.pipeline) x = add(x, q);
  return x;
}

BaseStockPolicy::BaseStockPolicy(double level) : ps_(scalar_params({{"level", level}})) {}

Action BaseStockPolicy::act(Tape& tape, const std::vector<Var>& theta,
                            const Observation& obs) const {
  require_single_store(obs, "base-stock policy");
  Var x = inventory_position(obs.state);
  Var S = matmul(tape.constant(Mat::Ones(x.rows(), 1)), theta[0]);
  return Action{{}, relu(sub(S, x))};
}

CappedBaseStockPolicy::CappedBaseStockPolicy(double level, double cap)
    : ps_(scalar_params({{"level", level}, {"cap", cap}})) {}

Action CappedBaseStockPolicy::act(Tape& tape, const std::vector<Var>& theta,
                                  const Observation& obs) const {
  require_single_store(obs, "capped base-stock policy");
  Var x = inventory_position(obs.state);
  Var ones = tape.constant(Mat::Ones(x.rows(), 1));
  Var S = matmul(ones, theta[0]);
  Var r = matmul(ones, theta[1]);
  return Action{{}, minimum(relu(sub(S, x)), r)};
}

EchelonPolicy::EchelonPolicy(const std::vector<double>& levels) {
  Mat m(1, static_cast<Eigen::Index>(levels.size()));
  for (std::size_t k = 0; k < levels.size(); ++k) m(0, static_cast<Eigen::Index>(k)) = levels[k];
  ps_.add("levels", std::move(m));
}

std::vector<double> EchelonPolicy::levels() const {
  const Mat& m = ps_.value(0);
  return std::vector<double>(m.data(), m.data() + m.size());
}

Action EchelonPolicy::act(Tape& tape, const std::vector<Var>& theta,
                          const Observation& obs) const {
  if (obs.inst.topology != Topology::serial)
    throw ConfigError("echelon-stock policy requires the serial topology");
  const int K = obs.inst.K;
  if (theta[0].cols() != K) throw ShapeError("echelon-stock policy: one level per echelon");
  Var X = inventory_position(obs.state);  // rows x K
  Var ones = tape.constant(Mat::Ones(X.rows(), 1));
  Var S = matmul(ones, theta[0]);
  std::vector<Var> orders;
  Var Y = col(X, K - 1);
  std::vector<Var> echelon(K);
  echelon[K - 1] = Y;
  for (int k = K - 2; k >= 0; --k) echelon[k] = Y = add(Y, col(X, k));
  orders.push_back(relu(sub(col(S, 0), echelon[0])));
  for (int k = 1; k < K; ++k)
    orders.push_back(
        minimum(relu(col(obs.state.on_hand, k - 1)), relu(sub(col(S, k), echelon[k]))));
  return Action{{}, K == 1 ? orders[0] : concat_cols(orders)};
}

// ---------------------------------------------------------------- newsvendor

namespace {

std::vector<double> poisson_pmf(double lambda, int n) {
  std::vector<double> pmf(n + 1, 0.0);
  if (lambda <= 0.0) {
    pmf[0] = 1.0;
    return pmf;
  }
  double lp = -lambda;
  for (int k = 0; k <= n; ++k) {
    if (k > 0) lp += std::log(lambda) - std::log(static_cast<double>(k));
    pmf[k] = std::exp(lp);
  }
  return pmf;
}

}  // namespace

double newsvendor_level(const DemandModel& model, double p, double h, int L, std::uint64_t seed,
                        int samples) {
  if (p + h <= 0.0) throw ConfigError("newsvendor_level: p + h must be positive");
  if (L < 0) throw ConfigError("newsvendor_level: lead time must be nonnegative");
  const double tau = p / (p + h);
  const int n = L + 1;
  if (model.kind == DemandModel::Kind::poisson) {
    const double m = model.lambda * n;
    const int cap = static_cast<int>(m + 20.0 * std::sqrt(m + 1.0) + 20.0);
    auto pmf = poisson_pmf(m, cap);
    double c = 0.0;
    for (int k = 0; k <= cap; ++k) {
      c += pmf[k];
      if (c >= tau) return k;
    }
    return cap;
  }
  if (model.kind != DemandModel::Kind::trunc_normal)
    throw ConfigError("newsvendor_level: single-column Poisson or truncated normal demand only");
  if (model.sigma == 0.0) return n * std::max(0.0, model.mu);
  std::mt19937_64 rng = derived_rng(seed, 4000);
  std::normal_distribution<double> nd(model.mu, model.sigma);
  std::vector<double> s(samples);
  for (int i = 0; i < samples; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += std::max(0.0, nd(rng));
    s[i] = acc;
  }
  std::size_t idx = static_cast<std::size_t>(std::ceil(tau * samples)) - 1;
  idx = std::min(idx, s.size() - 1);
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(idx), s.end());
  return s[idx];
}

// ---------------------------------------------------------------- lost-demand DP

namespace {

struct Lattice {
  int L, bound, D;
  std::size_t size;
  std::vector<std::size_t> stride;
  Lattice(int L_, int bound_) : L(L_), bound(bound_), D(bound_ + 1) {
    stride.resize(L);
    std::size_t s = 1;
    for (int j = 0; j < L; ++j) {
      stride[j] = s;
      s *= static_cast<std::size_t>(D);
    }
    size = s;
  }
};

// Visits every lattice point with component sum <= bound.
template <typename Fn>
void for_each_state(const Lattice& lat, Fn&& fn) {
  std::vector<int> s(lat.L, 0);
  while (true) {
    int pos = std::accumulate(s.begin(), s.end(), 0);
    std::size_t idx = 0;
    for (int j = 0; j < lat.L; ++j) idx += lat.stride[j] * static_cast<std::size_t>(s[j]);
    fn(s, pos, idx);
    int j = 0;
    while (j < lat.L) {
      ++s[j];
      if (std::accumulate(s.begin(), s.end(), 0) <= lat.bound) break;
      s[j] = 0;
      ++j;
    }
    if (j == lat.L) break;
  }
}

struct DpAttempt {
  DpResult res;
  bool audit_ok = false;
};

DpAttempt dp_once(double lambda, double p, double h, int L, int bound, const DpConfig& cfg) {
  Lattice lat(L, bound);
  auto pmf = poisson_pmf(lambda, bound + 1);
  // trans[I][k] = P((I - xi)+ = k)
  std::vector<std::vector<double>> trans(bound + 1);
  std::vector<double> cost(bound + 1);
  for (int I = 0; I <= bound; ++I) {
    trans[I].assign(I + 1, 0.0);
    double below = 0.0, over = 0.0;
    for (int k = 1; k <= I; ++k) {
      trans[I][k] = pmf[I - k];
      below += pmf[I - k];
    }
    trans[I][0] = std::max(0.0, 1.0 - below);
    for (int d = 0; d < I; ++d) over += (I - d) * pmf[d];
    const double short_ = lambda - I + over;
    cost[I] = p * short_ + h * over;
  }

  struct Entry {
    std::size_t idx, base;
    int I, amax;
  };
  std::vector<Entry> states;
  const std::size_t top = lat.stride[L - 1];
  for_each_state(lat, [&](const std::vector<int>& s, int pos, std::size_t idx) {
    std::size_t base = 0;
    for (int j = 1; j < L; ++j) base += lat.stride[j - 1] * static_cast<std::size_t>(s[j]);
    states.push_back({idx, base, s[0], bound - pos});
  });

  std::vector<double> V(lat.size, 0.0), W(lat.size, 0.0);
  std::vector<int> act(lat.size, -1);
  DpAttempt out;
  DpResult& r = out.res;
  r.L = L;
  r.bound = bound;
  double lo = 0.0, hi = 0.0;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (const Entry& e : states) {
      const double* tr = trans[e.I].data();
      double best = std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a <= e.amax; ++a) {
        const double* v = V.data() + e.base + top * static_cast<std::size_t>(a);
        double acc = 0.0;
        for (int k = 0; k <= e.I; ++k) acc += tr[k] * v[k];
        if (acc < best - 1e-13) {
          best = acc;
          best_a = a;
        }
      }
      const double nv = cost[e.I] + best;
      const double diff = nv - V[e.idx];
      lo = std::min(lo, diff);
      hi = std::max(hi, diff);
      W[e.idx] = nv;
      act[e.idx] = best_a;
    }
    const double ref = W[0];
    for (const Entry& e : states) V[e.idx] = W[e.idx] - ref;
    r.iterations = it;
    r.span = hi - lo;
    if (r.span < cfg.tolerance) break;
  }
  if (r.span >= cfg.tolerance)
    throw Error("dp_lost_demand: no convergence after " + std::to_string(r.iterations) +
                " iterations (span " + std::to_string(r.span) + ")");
  r.average_cost = 0.5 * (lo + hi);
  r.action = act;

  // Stationary distribution of the greedy chain, started from the empty system.
  std::vector<double> pi(lat.size, 0.0), nxt(lat.size, 0.0);
  pi[0] = 1.0;
  for (int it = 0; it < 200000; ++it) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (const Entry& e : states) {
      const double m = pi[e.idx];
      if (m == 0.0) continue;
      const std::size_t b = e.base + top * static_cast<std::size_t>(act[e.idx]);
      const double* tr = trans[e.I].data();
      for (int k = 0; k <= e.I; ++k) nxt[b + k] += m * tr[k];
    }
    double delta = 0.0;
    for (const Entry& e : states) delta += std::abs(nxt[e.idx] - pi[e.idx]);
    pi.swap(nxt);
    if (delta < 1e-13) break;
  }
  double mass = 0.0;
  for (const Entry& e : states)
    if (act[e.idx] == e.amax) mass += pi[e.idx];
  r.boundary_mass = mass;
  out.audit_ok = mass <= cfg.boundary_tolerance;
  return out;
}

}  // namespace

int DpResult::action_at(const std::vector<int>& s) const {
  if (static_cast<int>(s.size()) != L) throw ShapeError("DpResult: state has wrong length");
  int pos = 0;
  std::size_t idx = 0, stride = 1;
  for (int j = 0; j < L; ++j) {
    const int v = std::clamp(s[j], 0, bound);
    pos += v;
    idx += stride * static_cast<std::size_t>(v);
    stride *= static_cast<std::size_t>(bound + 1);
  }
  if (pos > bound) return 0;
  return action[idx];
}

DpResult dp_lost_demand(double lambda, double p, double h, int L, const DpConfig& cfg) {
  if (L < 1 || L > 4) throw ConfigError("dp_lost_demand: lead time must lie in 1..4");
  if (lambda < 0.0 || p < 0.0 || h < 0.0) throw ConfigError("dp_lost_demand: negative input");
  int bound = cfg.bound;
  if (bound <= 0) {
    const double m = lambda * (L + 1);
    bound = static_cast<int>(std::ceil(m + 4.0 * std::sqrt(m) + 5.0));
  }
  if (lambda == 0.0) {
    // Stock never depletes, so the chain is multichain; from the empty system
    // ordering nothing costs nothing.
    DpResult r;
    r.L = L;
    r.bound = bound;
    r.action.assign(Lattice(L, bound).size, 0);
    return r;
  }
  for (int attempt = 0;; ++attempt) {
    DpAttempt a = dp_once(lambda, p, h, L, bound, cfg);
    if (a.audit_ok) return a.res;
    if (!cfg.adaptive || attempt >= 6)
      throw TruncationError("dp_lost_demand: stationary mass " +
                            std::to_string(a.res.boundary_mass) + " at the bound " +
                            std::to_string(bound) + "; increase the state bound");
    bound += std::max(3, bound / 5);
  }
}

DpPolicy::DpPolicy(DpResult table) : table_(std::move(table)) {}

Action DpPolicy::act(Tape& tape, const std::vector<Var>&, const Observation& obs) const {
  require_single_store(obs, "DP policy");
  const int L = table_.L;
  if (static_cast<int>(obs.state.pipeline.size()) < L - 1)
    throw ShapeError("DP policy: pipeline shorter than the table's lead time");
  const Mat& I = obs.state.on_hand.value();
  Mat a(I.rows(), 1);
  std::vector<int> s(L);
  for (Eigen::Index r = 0; r < I.rows(); ++r) {
    s[0] = static_cast<int>(std::lround(I(r, 0)));
    for (int j = 1; j < L; ++j) s[j] = static_cast<int>(std::lround(obs.state.pipeline[j - 1].value()(r, 0)));
    a(r, 0) = table_.action_at(s);
  }
  return Action{{}, tape.constant(std::move(a))};
}

// ---------------------------------------------------------------- CBS search

CbsResult cbs_search(const ProblemInstance& inst, const TraceStore& scenarios,
                     const EvalSpec& spec, double demand_mean, bool integer_levels) {
  if (inst.topology != Topology::single_store || inst.mode != DemandMode::lost)
    throw ConfigError("cbs_search: single-store lost-demand instance required");
  const int L = inst.lead.at(0);
  CbsResult best;
  best.cost = std::numeric_limits<double>::infinity();
  auto eval = [&](double S, double r) {
    CappedBaseStockPolicy pol(S, r);
    ++best.evaluations;
    return evaluate(pol, scenarios, inst, spec);
  };
  auto consider = [&](double S, double r) {
    const double c = eval(S, r);
    if (c < best.cost) {
      best.cost = c;
      best.level = S;
      best.cap = r;
    }
    return c;
  };
  const double m = demand_mean * (L + 1);
  const int s_lo = static_cast<int>(std::floor(0.5 * m));
  const int s_hi = static_cast<int>(std::ceil(m + 4.0 * std::sqrt(m) + 2.0));
  const int r_hi = static_cast<int>(std::ceil(demand_mean + 4.0 * std::sqrt(demand_mean) + 2.0));
  for (int S = s_lo; S <= s_hi; ++S)
    for (int r = 1; r <= std::min(r_hi, S); ++r) consider(S, r);
  const std::vector<double> steps =
      integer_levels ? std::vector<double>{1.0} : std::vector<double>{1.0, 0.5, 0.25};
  for (double step : steps) {
    bool moved = true;
    while (moved) {
      moved = false;
      const double S0 = best.level, r0 = best.cap, c0 = best.cost;
      for (auto [dS, dr] : {std::pair{step, 0.0}, {-step, 0.0}, {0.0, step}, {0.0, -step}}) {
        if (r0 + dr <= 0.0) continue;
        consider(S0 + dS, r0 + dr);
      }
      moved = best.cost < c0;
    }
  }
  return best;
}

// ---------------------------------------------------------------- echelon search

EchelonResult echelon_search(const ProblemInstance& inst, const TraceStore& train,
                             const TraceStore& dev, double demand_mean,
                             const EchelonSearchConfig& cfg) {
  if (inst.topology != Topology::serial) throw ConfigError("echelon_search: serial instance required");
  const int K = inst.K;
  EchelonResult res;
  res.cost = std::numeric_limits<double>::infinity();
  EvalSpec dev_spec{cfg.train.dev_T, cfg.train.dev_burn_in, false, 512, cfg.train.parallelism};
  for (double scale : cfg.start_scales) {
    std::vector<double> init(K);
    int lead_sum = 0;
    for (int k = K - 1; k >= 0; --k) {
      lead_sum += inst.lead[k];
      init[k] = scale * demand_mean * (lead_sum + 1);
    }
    EchelonPolicy pol(init);
    hdpo_train(pol, train, dev, inst, cfg.train);
    const double c = evaluate(pol, dev, inst, dev_spec);
    res.start_costs.push_back(c);
    if (c < res.cost) {
      res.cost = c;
      res.levels = pol.levels();
    }
  }
  return res;
}

// ---------------------------------------------------------------- transshipment

Mat constant_correlation_cov(const std::vector<double>& sigma, double rho) {
  const Eigen::Index K = static_cast<Eigen::Index>(sigma.size());
  Mat S(K, K);
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = 0; j < K; ++j) S(i, j) = (i == j ? 1.0 : rho) * sigma[i] * sigma[j];
  return S;
}

namespace {

Mat checked_cholesky(const Mat& Sigma) {
  Eigen::LLT<Mat> llt(Sigma);
  if (llt.info() != Eigen::Success) throw ConfigError("covariance matrix is not positive definite");
  return llt.matrixL();
}

}  // namespace

TransshipmentBound transshipment_bound(int K, double p, double h, int L0, int L1,
                                       const std::vector<double>& mu, const Mat& Sigma) {
  if (static_cast<int>(mu.size()) != K || Sigma.rows() != K || Sigma.cols() != K)
    throw ShapeError("transshipment_bound: mu and Sigma must have K entries");
  checked_cholesky(Sigma);
  double sum_mu = 0.0, sum_sigma = 0.0;
  for (int k = 0; k < K; ++k) {
    sum_mu += mu[k];
    sum_sigma += std::sqrt(Sigma(k, k));
  }
  TransshipmentBound b;
  b.mu_G = (L0 + L1 + 1) * sum_mu;
  b.sigma_G = std::sqrt(L0 * Sigma.sum() + (L1 + 1) * sum_sigma * sum_sigma);
  boost::math::normal_distribution<double> G(b.mu_G, b.sigma_G), N01(0.0, 1.0);
  b.S0 = boost::math::quantile(G, p / (p + h));
  b.s_hat = (b.S0 - b.mu_G) / b.sigma_G;
  b.total = p * (b.mu_G - b.S0) +
            (p + h) * b.sigma_G * (b.s_hat * boost::math::cdf(N01, b.s_hat) +
                                   boost::math::pdf(N01, b.s_hat));
  b.per_store = b.total / K;
  return b;
}

MonteCarloEstimate simulate_relaxed_transshipment(int K, double p, double h, int L0, int L1,
                                                  const std::vector<double>& mu,
                                                  const Mat& Sigma, double S0, long samples,
                                                  std::uint64_t seed) {
  const Mat C = checked_cholesky(Sigma);
  std::mt19937_64 rng = derived_rng(seed, 5000);
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::VectorXd mean(K), sd(K), z(K);
  for (int k = 0; k < K; ++k) {
    mean(k) = mu[k];
    sd(k) = std::sqrt(Sigma(k, k));
  }
  const double n1 = L1 + 1.0;
  const double root = std::sqrt(n1);
  double sum = 0.0, sq = 0.0;
  for (long s = 0; s < samples; ++s) {
    // Aggregate demand during the warehouse lead time.
    double agg = 0.0;
    for (int t = 0; t < L0; ++t) {
      for (int k = 0; k < K; ++k) z(k) = n01(rng);
      agg += (mean + C * z).sum();
    }
    // Rebalance the remaining units to a common standardized level.
    const double avail = S0 - agg;
    const double common = (avail - n1 * mean.sum()) / (root * sd.sum());
    for (int k = 0; k < K; ++k) z(k) = n01(rng);
    Eigen::VectorXd D = n1 * mean + root * (C * z);
    double cost = 0.0;
    for (int k = 0; k < K; ++k) {
      const double y = n1 * mean(k) + common * root * sd(k);
      cost += p * std::max(0.0, D(k) - y) + h * std::max(0.0, y - D(k));
    }
    sum += cost;
    sq += cost * cost;
  }
  MonteCarloEstimate e;
  e.samples = samples;
  e.mean = sum / samples;
  const double var = std::max(0.0, sq / samples - e.mean * e.mean);
  e.stderr_ = std::sqrt(var / samples);
  return e;
}

// ---------------------------------------------------------------- cache

OracleCache::OracleCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (in) {
    try {
      data_ = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error("oracle cache " + path_ + " is corrupt: " + e.what());
    }
  }
}

bool OracleCache::has(const std::string& key) const { return data_.contains(key); }

nlohmann::json OracleCache::get(const std::string& key) const { return data_.at(key); }

void OracleCache::put(const std::string& key, const nlohmann::json& value) {
  data_[key] = value;
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw Error("cannot write oracle cache " + path_);
  out << data_.dump(2) << '\n';
}

}  // namespace hdlab
