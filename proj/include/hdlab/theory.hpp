#pragma once

// Constructive check of asymptotic optimality on the high/low demand example:
// K stores with zero lead time, one warehouse with lead time one, demand
// xi^k = B * U^k with B in {gamma_h (prob q), gamma_l} and U^k uniform.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdlab/error.hpp"

namespace hdlab::theory {

struct Primitives {
  int K = 4;
  double gamma_h = 1.2;
  double gamma_l = 1.0;
  double q = 0.5;
  std::vector<double> u_lo, u_hi, p, h;
  double h0 = 0.3;

  // Homogeneous stores.
  static Primitives homogeneous(int K, double gamma_h, double gamma_l, double q, double u_lo,
                                double u_hi, double p, double h, double h0);
  // Throws ConfigError naming the violated assumption.
  void validate() const;
  double mu_hat() const;  // sum of uniform means
  double D_high() const { return gamma_h * mu_hat(); }
  double D_low() const { return gamma_l * mu_hat(); }
  double kappa() const;
};

// Per-store demand: mixture of U(gamma_h a, gamma_h b) w.p. q and U(gamma_l a, gamma_l b).
struct MixtureUniform {
  double q, a1, b1, a2, b2;
  double cdf(double y) const;
  double quantile(double tau) const;
  double mean() const;
  double expected_excess(double y) const;  // E[(xi - y)+]
};

MixtureUniform store_demand(const Primitives& pr, int k);

// E[p (xi - y)+ + h (y - xi)+] - h0 y for store k.
double store_term(const Primitives& pr, int k, double y);

// v(Z, y) = h0 Z + sum_k store_term(k, y_k).
double immediate_cost(const Primitives& pr, double Z, const std::vector<double>& y);

struct RhatResult {
  double value = 0.0;
  std::vector<double> y;
  double lambda = 0.0;
};

// min_y v(Z, y) s.t. sum y <= Z, by bisection on the multiplier.
RhatResult solve_Rhat(double Z, const Primitives& pr);

struct BaseLevels {
  double S_hat = 0.0;
  std::vector<double> y_low;   // levels after a high-demand period
  std::vector<double> y_high;  // levels after a low-demand period
  double lambda_low = 0.0, lambda_high = 0.0;
  nlohmann::json to_json() const;
};

// Golden-section minimization of q R(S - D_H) + (1 - q) R(S - D_L).
double solve_S_hat(const Primitives& pr);
BaseLevels base_levels(const Primitives& pr);

// Closed form R(Z1) + (T - 1)[q R(S - D_H) + (1 - q) R(S - D_L)] for Z1 <= S;
// falls back to the backward recursion otherwise.
double eval_fully_relaxed(const Primitives& pr, double Z1, int T);

// Backward recursion J_t(Z) = R(Z) + min_{y >= Z} E[J_{t+1}(y - D)] on the two-point D.
double fully_relaxed_recursion(const Primitives& pr, double Z1, int T);

// Warehouse stock that makes the first period cost equal R(Z1): S_hat - D_L.
double planned_start(const Primitives& pr);

struct PiTildeStats {
  std::vector<double> scenario_cost;  // total expected cost per scenario over T periods
  double mean = 0.0;
  double stderr_ = 0.0;
  double misclassification = 0.0;  // share of periods t >= 2 with W~ != W
  double scarcity = 0.0;           // mean unfilled store bids per period
};

// Simulates the symmetric context policy in the original system from the
// planned start (stores empty, warehouse holding planned_start). Period costs
// are conditional expectations given the allocation.
PiTildeStats run_pi_tilde(const Primitives& pr, const BaseLevels& levels, int T, int scenarios,
                          std::uint64_t seed);

struct GapRow {
  int K = 0;
  double J_pi = 0.0;
  double J_pi_stderr = 0.0;
  double J_hat = 0.0;
  double ratio = 0.0;
  double ratio_stderr = 0.0;
  double misclassification = 0.0;
  double markov_bound = 0.0;
  bool below_one = false;  // ratio < 1 beyond 3 standard errors
};

struct GapTable {
  std::vector<GapRow> rows;
  double exponent = 0.0;   // slope of log(ratio - 1) against log K
  bool fit_valid = false;
  std::string csv() const;
};

// Homogeneous family: every K uses the same per-store primitives.
GapTable gap_scaling_experiment(const Primitives& per_store, const std::vector<int>& Ks, int T,
                                int scenarios, std::uint64_t seed);

}  // namespace hdlab::theory
