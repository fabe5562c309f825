#include "hdlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace hdlab::theory {

Primitives Primitives::homogeneous(int K, double gamma_h, double gamma_l, double q, double u_lo,
                                   double u_hi, double p, double h, double h0) {
  Primitives pr;
  pr.K = K;
  pr.gamma_h = gamma_h;
  pr.gamma_l = gamma_l;
  pr.q = q;
  pr.u_lo.assign(K, u_lo);
  pr.u_hi.assign(K, u_hi);
  pr.p.assign(K, p);
  pr.h.assign(K, h);
  pr.h0 = h0;
  return pr;
}

void Primitives::validate() const {
  if (K < 1) throw ConfigError("theory: K must be positive");
  auto sized = [&](const std::vector<double>& v, const char* name) {
    if (static_cast<int>(v.size()) != K)
      throw ConfigError(std::string("theory: ") + name + " must have K entries");
  };
  sized(u_lo, "u_lo");
  sized(u_hi, "u_hi");
  sized(p, "p");
  sized(h, "h");
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("theory: q must lie in (0, 1)");
  if (!(gamma_l > 0.0 && gamma_l <= gamma_h))
    throw ConfigError("theory: need 0 < gamma_l <= gamma_h");
  if (h0 < 0.0) throw ConfigError("theory: h0 must be nonnegative");
  for (int k = 0; k < K; ++k) {
    if (u_lo[k] > u_hi[k]) throw ConfigError("theory: u_lo exceeds u_hi");
    if (p[k] < 0.0 || h[k] <= h0)
      throw ConfigError("theory: costs must satisfy p >= 0 and h > h0");
    if (gamma_l * u_lo[k] < gamma_h * u_hi[k] - gamma_l * u_lo[k])
      throw ConfigError("theory: assumption 1 violated (gamma_l u_lo >= gamma_h u_hi - gamma_l u_lo)");
  }
  if (q * *std::min_element(p.begin(), p.end()) < (1.0 - q) * h0)
    throw ConfigError("theory: assumption 2 violated (q min p >= (1 - q) h0)");
}

double Primitives::mu_hat() const {
  double s = 0.0;
  for (int k = 0; k < K; ++k) s += 0.5 * (u_lo[k] + u_hi[k]);
  return s;
}

double Primitives::kappa() const {
  double k = 0.0;
  for (double u : u_hi) k = std::max(k, std::max(u, 1.0 / u));
  return k;
}

// ---------------------------------------------------------------- mixture

namespace {

double comp_cdf(double a, double b, double y, bool left) {
  if (a == b) return left ? (y > a ? 1.0 : 0.0) : (y >= a ? 1.0 : 0.0);
  if (y <= a) return 0.0;
  if (y >= b) return 1.0;
  return (y - a) / (b - a);
}

double comp_excess(double a, double b, double y) {
  if (y <= a) return 0.5 * (a + b) - y;
  if (y >= b) return 0.0;
  return (b - y) * (b - y) / (2.0 * (b - a));
}

}  // namespace

double MixtureUniform::cdf(double y) const {
  return q * comp_cdf(a1, b1, y, false) + (1.0 - q) * comp_cdf(a2, b2, y, false);
}

double MixtureUniform::quantile(double tau) const {
  std::vector<double> x{a1, b1, a2, b2};
  std::sort(x.begin(), x.end());
  x.erase(std::unique(x.begin(), x.end()), x.end());
  if (tau <= 0.0) return x.front();
  if (tau >= 1.0) return x.back();
  auto left = [&](double y) {
    return q * comp_cdf(a1, b1, y, true) + (1.0 - q) * comp_cdf(a2, b2, y, true);
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double Fi = cdf(x[i]);
    if (Fi >= tau) return x[i];
    if (i + 1 == x.size()) break;
    const double Fl = left(x[i + 1]);
    if (tau <= Fl && Fl > Fi) return x[i] + (tau - Fi) / (Fl - Fi) * (x[i + 1] - x[i]);
  }
  return x.back();
}

double MixtureUniform::mean() const {
  return q * 0.5 * (a1 + b1) + (1.0 - q) * 0.5 * (a2 + b2);
}

double MixtureUniform::expected_excess(double y) const {
  return q * comp_excess(a1, b1, y) + (1.0 - q) * comp_excess(a2, b2, y);
}

MixtureUniform store_demand(const Primitives& pr, int k) {
  return {pr.q, pr.gamma_h * pr.u_lo[k], pr.gamma_h * pr.u_hi[k], pr.gamma_l * pr.u_lo[k],
          pr.gamma_l * pr.u_hi[k]};
}

double store_term(const Primitives& pr, int k, double y) {
  const MixtureUniform m = store_demand(pr, k);
  const double over = m.expected_excess(y);
  const double under = y - m.mean() + over;
  return pr.p[k] * over + pr.h[k] * under - pr.h0 * y;
}

double immediate_cost(const Primitives& pr, double Z, const std::vector<double>& y) {
  double v = pr.h0 * Z;
  for (int k = 0; k < pr.K; ++k) v += store_term(pr, k, y[k]);
  return v;
}

// ---------------------------------------------------------------- R hat

namespace {

std::vector<double> levels_at(const Primitives& pr, double lambda) {
  std::vector<double> y(pr.K);
  for (int k = 0; k < pr.K; ++k) {
    const double tau = (pr.p[k] + pr.h0 - lambda) / (pr.p[k] + pr.h[k]);
    y[k] = store_demand(pr, k).quantile(tau);
  }
  return y;
}

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

RhatResult solve_Rhat(double Z, const Primitives& pr) {
  if (!std::isfinite(Z)) throw ConfigError("solve_Rhat: Z must be finite");
  RhatResult r;
  std::vector<double> y0 = levels_at(pr, 0.0);
  if (total(y0) <= Z) {
    r.y = std::move(y0);
  } else {
    const double p_min = *std::min_element(pr.p.begin(), pr.p.end());
    const double lam_max = p_min + pr.h0;
    std::vector<double> ymax = levels_at(pr, lam_max);
    if (total(ymax) >= Z) {
      // Deficit below the demand support: stores with the smallest p absorb it linearly.
      r.lambda = lam_max;
      std::vector<int> cheap;
      double rest = 0.0;
      for (int k = 0; k < pr.K; ++k) {
        if (pr.p[k] == p_min)
          cheap.push_back(k);
        else
          rest += ymax[k];
      }
      const double share = (Z - rest) / static_cast<double>(cheap.size());
      for (int k : cheap) ymax[k] = share;
      r.y = std::move(ymax);
    } else {
      double lo = 0.0, hi = lam_max;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (total(levels_at(pr, mid)) > Z)
          lo = mid;
        else
          hi = mid;
      }
      std::vector<double> yl = levels_at(pr, lo), yh = levels_at(pr, hi);
      // Spread any residual over stores whose level jumps inside [lo, hi].
      double residual = Z - total(yh);
      double jump = 0.0;
      for (int k = 0; k < pr.K; ++k) jump += yl[k] - yh[k];
      if (residual > 0.0 && jump > 0.0) {
        const double f = std::min(1.0, residual / jump);
        for (int k = 0; k < pr.K; ++k) yh[k] += f * (yl[k] - yh[k]);
      }
      r.lambda = 0.5 * (lo + hi);
      r.y = std::move(yh);
    }
  }
  r.value = immediate_cost(pr, Z, r.y);
  return r;
}

// ---------------------------------------------------------------- S hat

namespace {

double golden(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

double s_objective(const Primitives& pr, double S) {
  return pr.q * solve_Rhat(S - pr.D_high(), pr).value +
         (1.0 - pr.q) * solve_Rhat(S - pr.D_low(), pr).value;
}

}  // namespace

double solve_S_hat(const Primitives& pr) {
  pr.validate();
  double hi_u = 0.0;
  for (double u : pr.u_hi) hi_u += pr.gamma_h * u;
  double lo = pr.D_low(), hi = pr.D_high() + hi_u;
  auto f = [&](double S) { return s_objective(pr, S); };
  for (int attempt = 0; attempt < 2; ++attempt) {
    const double width = hi - lo;
    const double tol = 1e-11 * std::max(1.0, std::abs(hi));
    const double S = golden(f, lo, hi, tol);
    const double edge = 1e-7 * width;
    const bool at_lo = S - lo < edge, at_hi = hi - S < edge;
    if (!at_lo && !at_hi) return S;
    if (at_lo) lo -= width;
    if (at_hi) hi += width;
  }
  throw Error("solve_S_hat: minimizer stays on the bracket boundary after widening");
}

BaseLevels base_levels(const Primitives& pr) {
  BaseLevels b;
  b.S_hat = solve_S_hat(pr);
  RhatResult lo = solve_Rhat(b.S_hat - pr.D_high(), pr);
  RhatResult hi = solve_Rhat(b.S_hat - pr.D_low(), pr);
  b.y_low = lo.y;
  b.y_high = hi.y;
  b.lambda_low = lo.lambda;
  b.lambda_high = hi.lambda;
  return b;
}

nlohmann::json BaseLevels::to_json() const {
  return {{"S_hat", S_hat}, {"y_low", y_low}, {"y_high", y_high},
          {"lambda_low", lambda_low}, {"lambda_high", lambda_high}};
}

double planned_start(const Primitives& pr) { return solve_S_hat(pr) - pr.D_low(); }

// ---------------------------------------------------------------- fully relaxed cost

double fully_relaxed_recursion(const Primitives& pr, double Z1, int T) {
  if (T < 1) throw ConfigError("fully_relaxed_recursion: T must be positive");
  double hi_u = 0.0;
  for (double u : pr.u_hi) hi_u += pr.gamma_h * u;
  const double lo = pr.D_low() - hi_u, hi = pr.D_high() + 2.0 * hi_u;
  // ystar[t], gstar[t]: minimizer and minimum of G_t(y) = E[J_t(y - D)], t = 2..T.
  std::vector<double> ystar(T + 2, 0.0), gstar(T + 2, 0.0);
  std::function<double(int, double)> J;
  auto G = [&](int t, double y) {
    return pr.q * J(t, y - pr.D_high()) + (1.0 - pr.q) * J(t, y - pr.D_low());
  };
  J = [&](int t, double Z) -> double {
    double v = solve_Rhat(Z, pr).value;
    if (t < T) v += Z <= ystar[t + 1] ? gstar[t + 1] : G(t + 1, Z);
    return v;
  };
  for (int t = T; t >= 2; --t) {
    const double tol = 1e-11 * std::max(1.0, std::abs(hi));
    ystar[t] = golden([&](double y) { return G(t, y); }, lo, hi, tol);
    gstar[t] = G(t, ystar[t]);
  }
  return J(1, Z1);
}

double eval_fully_relaxed(const Primitives& pr, double Z1, int T) {
  if (T < 1) throw ConfigError("eval_fully_relaxed: T must be positive");
  const double S = solve_S_hat(pr);
  if (Z1 > S) return fully_relaxed_recursion(pr, Z1, T);
  return solve_Rhat(Z1, pr).value + (T - 1) * s_objective(pr, S);
}

// ---------------------------------------------------------------- pi tilde

PiTildeStats run_pi_tilde(const Primitives& pr, const BaseLevels& lv, int T, int scenarios,
                          std::uint64_t seed) {
  pr.validate();
  if (T < 1 || scenarios < 1) throw ConfigError("run_pi_tilde: T and scenarios must be positive");
  const int K = pr.K;
  const double mid = 0.5 * (pr.D_high() + pr.D_low());
  const double Z1 = lv.S_hat - pr.D_low();
  PiTildeStats st;
  st.scenario_cost.resize(scenarios);
  long wrong = 0, judged = 0;
  double scarce = 0.0;
  std::vector<double> I(K), b(K), y(K);
  for (int s = 0; s < scenarios; ++s) {
    std::seed_seq sb{seed, std::uint64_t{1}, static_cast<std::uint64_t>(s)};
    std::seed_seq su{seed, std::uint64_t{2}, static_cast<std::uint64_t>(s)};
    std::mt19937_64 rb(sb), ru(su);
    std::bernoulli_distribution high(pr.q);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::fill(I.begin(), I.end(), 0.0);
    double I0 = Z1;
    double cost = 0.0;
    int prev_low = -1;
    for (int t = 0; t < T; ++t) {
      const double Z = I0 + total(I);
      const double a0 = std::max(0.0, lv.S_hat - Z);
      const int w = (lv.S_hat - Z < mid) ? 1 : 0;
      if (prev_low >= 0) {
        ++judged;
        if (w != prev_low) ++wrong;
      }
      double bsum = 0.0;
      for (int k = 0; k < K; ++k) {
        const double target = lv.y_low[k] + w * (lv.y_high[k] - lv.y_low[k]);
        b[k] = std::max(0.0, target - I[k]);
        bsum += b[k];
      }
      const double f = bsum > 0.0 ? std::min(1.0, std::max(0.0, I0) / bsum) : 0.0;
      double asum = 0.0;
      for (int k = 0; k < K; ++k) {
        const double a = b[k] * f;
        asum += a;
        y[k] = I[k] + a;
      }
      scarce += bsum - asum;
      cost += immediate_cost(pr, Z, y);
      const bool is_high = high(rb);
      const double B = is_high ? pr.gamma_h : pr.gamma_l;
      for (int k = 0; k < K; ++k) {
        const double u = pr.u_lo[k] + (pr.u_hi[k] - pr.u_lo[k]) * unif(ru);
        I[k] = y[k] - B * u;
      }
      I0 = I0 - asum + a0;
      prev_low = is_high ? 0 : 1;
    }
    st.scenario_cost[s] = cost;
  }
  double sum = 0.0, sq = 0.0;
  for (double c : st.scenario_cost) {
    sum += c;
    sq += c * c;
  }
  st.mean = sum / scenarios;
  const double var = scenarios > 1 ? std::max(0.0, (sq - scenarios * st.mean * st.mean) / (scenarios - 1)) : 0.0;
  st.stderr_ = std::sqrt(var / scenarios);
  st.misclassification = judged > 0 ? static_cast<double>(wrong) / judged : 0.0;
  st.scarcity = scarce / (static_cast<double>(scenarios) * T);
  return st;
}

// ---------------------------------------------------------------- gap scaling

GapTable gap_scaling_experiment(const Primitives& per_store, const std::vector<int>& Ks, int T,
                                int scenarios, std::uint64_t seed) {
  if (Ks.size() < 2) throw ConfigError("gap_scaling_experiment: need at least two K values");
  GapTable tab;
  for (int K : Ks) {
    Primitives pr = Primitives::homogeneous(K, per_store.gamma_h, per_store.gamma_l, per_store.q,
                                            per_store.u_lo.at(0), per_store.u_hi.at(0),
                                            per_store.p.at(0), per_store.h.at(0), per_store.h0);
    pr.validate();
    BaseLevels lv = base_levels(pr);
    PiTildeStats st = run_pi_tilde(pr, lv, T, scenarios, seed);
    GapRow row;
    row.K = K;
    row.J_pi = st.mean;
    row.J_pi_stderr = st.stderr_;
    row.J_hat = eval_fully_relaxed(pr, lv.S_hat - pr.D_low(), T);
    row.ratio = row.J_pi / row.J_hat;
    row.ratio_stderr = row.J_pi_stderr / row.J_hat;
    row.misclassification = st.misclassification;
    row.markov_bound =
        4.0 * pr.gamma_h * pr.kappa() * pr.kappa() / ((pr.gamma_h - pr.gamma_l) * std::sqrt(K));
    row.below_one = row.ratio < 1.0 - 3.0 * row.ratio_stderr;
    tab.rows.push_back(row);
  }
  bool ok = true;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const GapRow& r : tab.rows) {
    if (!(r.ratio > 1.0)) {
      ok = false;
      break;
    }
    const double x = std::log(static_cast<double>(r.K)), yv = std::log(r.ratio - 1.0);
    sx += x;
    sy += yv;
    sxx += x * x;
    sxy += x * yv;
  }
  const double n = static_cast<double>(tab.rows.size());
  if (ok) {
    tab.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    tab.fit_valid = true;
  } else {
    tab.exponent = std::nan("");
  }
  return tab;
}

std::string GapTable::csv() const {
  std::ostringstream o;
  o << "K,ratio,stderr,J_pi,J_hat,misclassification,markov_bound,fitted_exponent\n";
  char buf[512];
  for (const GapRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.6g,%.10g,%.10g,%.6g,%.6g,%.6g\n", r.K, r.ratio,
                  r.ratio_stderr, r.J_pi, r.J_hat, r.misclassification, r.markov_bound, exponent);
    o << buf;
  }
  return o.str();
}

}  // namespace hdlab::theory
