#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdlab/envsim.hpp"

namespace hdlab {

// Independent generator for (seed, stream, index); identical across thread counts.
std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

struct DemandModel {
  enum class Kind { poisson, trunc_normal, corr_normal, high_low };
  Kind kind = Kind::poisson;
  double lambda = 5.0;
  // trunc_normal: same (mu, sigma) for every column, censored at zero.
  double mu = 5.0;
  double sigma = 1.6;
  // corr_normal
  std::vector<double> means;
  std::vector<double> cvs;
  double rho = 0.0;
  bool truncate = true;
  // high_low: xi^k = B * U^k, B = gamma_h w.p. q else gamma_l.
  double gamma_h = 1.2;
  double gamma_l = 1.0;
  double q = 0.5;
  std::vector<double> u_lo;
  std::vector<double> u_hi;
  bool require_assumption = true;

  void validate(int K) const;
  std::vector<double> column_means(int K) const;
};

DemandModel::Kind demand_kind_from_string(const std::string& s);
std::string to_string(DemandModel::Kind k);

struct TraceStore {
  std::string split = "train";
  int T = 0;        // periods after the history prefix
  int history = 0;  // observed periods before t = 0
  int demand_cols = 1;
  int loc_cols = 1;
  int H = 0;
  int slots = 0;
  int wh_slots = 0;
  std::vector<double> demand;  // H x (history + T) x demand_cols
  std::vector<double> on_hand;  // H x loc_cols
  std::vector<double> pipeline;  // H x slots x loc_cols
  std::vector<double> wh_on_hand;  // H
  std::vector<double> wh_pipeline;  // H x wh_slots
  std::vector<double> p;       // optional, H x demand_cols
  std::vector<int> lead;       // optional, H x loc_cols
  std::vector<double> anchor_days;  // optional, days to the seasonal anchor at index 0
  int aux_dim = 0;
  std::vector<double> aux;  // optional, H x (history + T) x aux_dim per-period features
  std::vector<std::string> trace_ids;

  int length() const { return history + T; }
  double& d(int h, int t, int k) {
    return demand[(static_cast<std::size_t>(h) * length() + t) * demand_cols + k];
  }
  double d(int h, int t, int k) const {
    return demand[(static_cast<std::size_t>(h) * length() + t) * demand_cols + k];
  }
  std::vector<double> sample_means() const;
  bool operator==(const TraceStore& o) const;
};

// Demand-only store: H scenarios of `history + T` periods.
TraceStore generate(const DemandModel& model, int T, int K, int H, std::uint64_t seed,
                    const std::string& split = "train", int history = 0);

void attach_initial_states(TraceStore& store, const ProblemInstance& inst, InitMode mode,
                           const std::vector<double>& mu_hat, std::uint64_t seed);

struct PrimitiveMeta {
  double p_hat = 9.0;
  int lead_min = 4;
  int lead_max = 6;
  double h = 1.0;
};

struct SampledPrimitives {
  std::vector<double> p;
  std::vector<int> lead;
  std::vector<double> h;
};

SampledPrimitives sample_primitives(const PrimitiveMeta& meta, int H, std::uint64_t seed);

// Days-to-anchor offset for per-period exogenous features; one week per period.
double days_to_anchor(double days_at_zero, int t);

ScenarioBatch make_batch(const TraceStore& store, const ProblemInstance& inst,
                         const std::vector<int>& ids, int horizon);

struct DatasetSpec {
  int train_H = 1024, dev_H = 1024, test_H = 1024;
  int train_T = 50, dev_T = 50, test_T = 500;
  int history = 0;
  InitMode init = InitMode::uniform;
  std::uint64_t seed = 1;
};

struct Dataset {
  TraceStore train, dev, test;
  std::vector<double> mu_hat;
};

Dataset build_dataset(const ProblemInstance& inst, const DemandModel& model,
                      const DatasetSpec& spec);

struct IngestConfig {
  std::string date_from;  // inclusive, YYYY-MM-DD; empty = first date seen
  std::string date_to;    // inclusive; empty = last date seen
  int first_window = 16;
  double min_first_window_sales = 1.0;
  double zero_week_threshold = 0.10;
  bool exclude_perishable = true;
};

struct IngestReport {
  int traces_seen = 0;
  int dropped_perishable = 0;
  int dropped_first_window = 0;
  int dropped_zero_weeks = 0;
  int retained = 0;
  int weeks = 0;
  std::vector<std::string> warnings;
  nlohmann::json to_json() const;
};

TraceStore ingest_csv(const std::string& path, const IngestConfig& cfg, IngestReport* report);

void save_trace_store(const TraceStore& store, const std::string& path);
TraceStore load_trace_store(const std::string& path);

}  // namespace hdlab
