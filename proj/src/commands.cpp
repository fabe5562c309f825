#include "hdlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "hdlab/error.hpp"
#include "hdlab/nvsuite.hpp"
#include "hdlab/oracles.hpp"
#include "hdlab/policies.hpp"
#include "hdlab/theory.hpp"

namespace fs = std::filesystem;

namespace hdlab {

namespace {

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream o(p, std::ios::binary | std::ios::trunc);
  if (!o) throw Error("cannot write " + p.string());
  o << content;
  if (!o) throw Error("write failed: " + p.string());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Creates <root>/<command>-<fingerprint prefix>; existing directories need --force.
fs::path prepare_run_dir(const std::string& command, const ExperimentConfig& c,
                         const CommandOptions& opts) {
  const fs::path dir = fs::path(resolve_out_root(opts.out_root)) /
                       (command + "-" + c.fingerprint().substr(0, 12));
  if (fs::exists(dir)) {
    if (!opts.force)
      throw ConfigError("run directory " + dir.string() +
                        " already exists for this fingerprint; pass --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  write_file(dir / "config.ini", c.canonical());
  return dir;
}

std::vector<double> store_cvs(const DemandModel& m, int K) {
  std::vector<double> cv(K, 0.0);
  const std::vector<double> mean = m.column_means(K);
  for (int k = 0; k < K; ++k) {
    switch (m.kind) {
      case DemandModel::Kind::poisson: cv[k] = m.lambda > 0 ? 1.0 / std::sqrt(m.lambda) : 0.0; break;
      case DemandModel::Kind::trunc_normal: cv[k] = m.mu > 0 ? m.sigma / m.mu : 0.0; break;
      case DemandModel::Kind::corr_normal: cv[k] = m.cvs[k]; break;
      case DemandModel::Kind::high_low: {
        const double eb = m.q * m.gamma_h + (1 - m.q) * m.gamma_l;
        const double eb2 = m.q * m.gamma_h * m.gamma_h + (1 - m.q) * m.gamma_l * m.gamma_l;
        const double a = m.u_lo[k], b = m.u_hi[k];
        const double eu = 0.5 * (a + b), eu2 = (a * a + a * b + b * b) / 3.0;
        const double var = eb2 * eu2 - eb * eb * eu * eu;
        cv[k] = mean[k] > 0 ? std::sqrt(std::max(0.0, var)) / mean[k] : 0.0;
        break;
      }
    }
  }
  return cv;
}

Dataset load_or_build_dataset(const ExperimentConfig& c, const ProblemInstance& inst,
                              const DemandModel& model) {
  if (!c.has("data.dir")) return build_dataset(inst, model, dataset_spec_from_config(c));
  const fs::path dir = c.get("data.dir");
  for (const char* f : {"train.trace", "dev.trace", "test.trace", "provenance.json"})
    if (!fs::exists(dir / f))
      throw ConfigError("data.dir " + dir.string() + " has no " + f + "; run datagen first");
  Dataset d;
  d.train = load_trace_store((dir / "train.trace").string());
  d.dev = load_trace_store((dir / "dev.trace").string());
  d.test = load_trace_store((dir / "test.trace").string());
  std::ifstream in(dir / "provenance.json");
  nlohmann::json prov = nlohmann::json::parse(in);
  d.mu_hat = prov.at("mu_hat").get<std::vector<double>>();
  return d;
}

EvalSpec test_spec(const TrainConfig& t, int parallelism) {
  EvalSpec e;
  e.horizon = t.test_T;
  e.burn_in = t.test_burn_in;
  e.round_actions = t.round_eval;
  e.parallelism = parallelism;
  return e;
}

std::string oracle_key(const std::string& name, const ExperimentConfig& c) {
  ExperimentConfig sub;
  for (const auto& [k, v] : c.entries()) {
    const bool relevant = k.rfind("instance.", 0) == 0 || k.rfind("demand.", 0) == 0 ||
                          k.rfind("data.", 0) == 0 || k.rfind("oracle.", 0) == 0 ||
                          k == "seeds.data" || k == "train.test_T" || k == "train.test_burn_in" ||
                          k == "train.round_eval";
    if (relevant) sub.set(k, v);
  }
  if (name == "echelon") {
    for (const auto& [k, v] : c.entries())
      if (k.rfind("train.", 0) == 0 || k == "seeds.shuffle") sub.set(k, v);
  }
  return name + ":" + sub.fingerprint();
}

OracleValue cached_oracle(const std::string& name, const ExperimentConfig& c,
                          const ProblemInstance& inst, const DemandModel& model, const Dataset& data,
                          const EvalSpec& test, const std::string& out_root) {
  fs::create_directories(out_root);
  OracleCache cache((fs::path(out_root) / "oracle_cache.json").string());
  const std::string key = oracle_key(name, c);
  if (cache.has(key)) {
    nlohmann::json j = cache.get(key);
    return {j.at("name"), j.at("cost"), j.at("detail")};
  }
  OracleValue v = compute_oracle(name, c, inst, model, data, test);
  cache.put(key, {{"name", v.name}, {"cost", v.cost}, {"detail", v.detail}});
  return v;
}

struct GapCheck {
  bool has_oracle = false;
  OracleValue oracle;
  double gap = 0.0;
  bool exceeded = false;
};

GapCheck check_gap(const ExperimentConfig& c, double cost, const ProblemInstance& inst,
                   const DemandModel& model, const Dataset& data, const EvalSpec& test,
                   const std::string& out_root) {
  GapCheck g;
  if (!c.has("eval.oracle")) {
    if (c.has("eval.gap_threshold"))
      throw ConfigError("eval.gap_threshold is set but eval.oracle is missing");
    return g;
  }
  g.has_oracle = true;
  g.oracle = cached_oracle(c.get("eval.oracle"), c, inst, model, data, test, out_root);
  g.gap = gap_percent(cost, g.oracle.cost);
  g.exceeded = c.has("eval.gap_threshold") && g.gap > c.number("eval.gap_threshold");
  return g;
}

// ---------------------------------------------------------------- commands

int cmd_datagen(const ExperimentConfig& c, const CommandOptions& opts, std::ostream& out) {
  ProblemInstance inst = instance_from_config(c);
  DemandModel model = demand_from_config(c, inst.demand_cols());
  DatasetSpec spec = dataset_spec_from_config(c);
  const fs::path dir = prepare_run_dir("datagen", c, opts);
  Dataset d = build_dataset(inst, model, spec);
  save_trace_store(d.train, (dir / "train.trace").string());
  save_trace_store(d.dev, (dir / "dev.trace").string());
  save_trace_store(d.test, (dir / "test.trace").string());
  nlohmann::json prov = {{"command", "datagen"},
                         {"fingerprint", c.fingerprint()},
                         {"seeds", {{"data", spec.seed}}},
                         {"mu_hat", d.mu_hat},
                         {"sizes", {{"train", d.train.H}, {"dev", d.dev.H}, {"test", d.test.H}}},
                         {"horizons", {{"train", d.train.T}, {"dev", d.dev.T}, {"test", d.test.T}}}};
  write_file(dir / "provenance.json", prov.dump(2) + "\n");
  std::ostringstream m;
  m << "split,H,T,mean_demand\n";
  for (const TraceStore* s : {&d.train, &d.dev, &d.test}) {
    const std::vector<double> mean = s->sample_means();
    double avg = 0.0;
    for (double v : mean) avg += v;
    m << s->split << ',' << s->H << ',' << s->T << ',' << fmt(avg / mean.size()) << '\n';
  }
  write_file(dir / "metrics.csv", m.str());
  out << "datagen: wrote " << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const ExperimentConfig& c, const CommandOptions& opts, std::ostream& out) {
  ProblemInstance inst = instance_from_config(c);
  DemandModel model = demand_from_config(c, inst.demand_cols());
  TrainConfig tc = train_config_from_config(c);
  tc.parallelism = opts.parallelism;
  Dataset data = load_or_build_dataset(c, inst, model);
  const fs::path dir = prepare_run_dir("train", c, opts);
  std::unique_ptr<Policy> policy = make_policy(c, inst, model, data.mu_hat);
  std::ofstream progress(dir / "progress.csv");
  progress << "epoch,train_loss,dev_loss,steps,seconds\n";
  TrainResult res = hdpo_train(*policy, data.train, data.dev, inst, tc, [&](const EvalRecord& e) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%ld,%.3f\n", e.epoch, e.train_loss, e.dev_loss,
                  e.steps, e.seconds);
    progress << buf << std::flush;
    out << "step " << e.steps << " train " << fmt(e.train_loss) << " dev " << fmt(e.dev_loss) << "\n";
  });
  const EvalSpec ts = test_spec(tc, opts.parallelism);
  const double test = evaluate(*policy, data.test, inst, ts);
  res.record.fingerprint = c.fingerprint();
  res.record.seeds = {{"data", c.integer_or("seeds.data", 1)},
                      {"init", c.integer_or("seeds.init", 1)},
                      {"shuffle", c.integer_or("seeds.shuffle", 1)}};
  res.record.test = {{"cost", test}};
  GapCheck g = check_gap(c, test, inst, model, data, ts, resolve_out_root(opts.out_root));
  if (g.has_oracle) {
    res.record.test["oracle"] = g.oracle.name;
    res.record.test["oracle_cost"] = g.oracle.cost;
    res.record.test["gap_pct"] = g.gap;
  }
  nlohmann::json meta = {{"policy", policy->kind()}, {"config", c.canonical()}};
  save_checkpoint((dir / "policy.ckpt").string(), policy->params(), c.fingerprint(), meta);
  nlohmann::json run = res.record.to_json();
  run["command"] = "train";
  write_file(dir / "run.json", run.dump(2) + "\n");
  write_file(dir / "metrics.csv", res.record.metrics_csv());
  out << "test cost " << fmt(test);
  if (g.has_oracle) out << "  oracle " << g.oracle.name << " " << fmt(g.oracle.cost) << "  gap " << fmt(g.gap) << "%";
  out << "\nrun directory " << dir.string() << "\n";
  return g.exceeded ? kExitGap : kExitOk;
}

int cmd_eval(const ExperimentConfig& c, const CommandOptions& opts, std::ostream& out) {
  ProblemInstance inst = instance_from_config(c);
  DemandModel model = demand_from_config(c, inst.demand_cols());
  TrainConfig tc = train_config_from_config(c);
  const std::string ckpt = c.get("eval.checkpoint");
  Dataset data = load_or_build_dataset(c, inst, model);
  std::unique_ptr<Policy> policy = make_policy(c, inst, model, data.mu_hat);
  Checkpoint cp = load_checkpoint(ckpt);
  assign_params(policy->params(), cp.params);
  const fs::path dir = prepare_run_dir("eval", c, opts);
  const EvalSpec ts = test_spec(tc, opts.parallelism);
  const double test = evaluate(*policy, data.test, inst, ts);
  GapCheck g = check_gap(c, test, inst, model, data, ts, resolve_out_root(opts.out_root));
  std::ostringstream m;
  m << "split,cost,oracle,oracle_cost,gap_pct\n";
  m << "test," << fmt(test) << ',' << (g.has_oracle ? g.oracle.name : "") << ','
    << (g.has_oracle ? fmt(g.oracle.cost) : "") << ',' << (g.has_oracle ? fmt(g.gap) : "") << '\n';
  write_file(dir / "metrics.csv", m.str());
  nlohmann::json run = {{"command", "eval"},
                        {"fingerprint", c.fingerprint()},
                        {"checkpoint", ckpt},
                        {"checkpoint_fingerprint", cp.fingerprint},
                        {"test", {{"cost", test}}}};
  if (g.has_oracle) {
    run["test"]["oracle"] = g.oracle.name;
    run["test"]["oracle_cost"] = g.oracle.cost;
    run["test"]["gap_pct"] = g.gap;
  }
  write_file(dir / "run.json", run.dump(2) + "\n");
  out << "test cost " << fmt(test);
  if (g.has_oracle) out << "  gap " << fmt(g.gap) << "% vs " << g.oracle.name;
  out << "\n";
  if (g.exceeded) out << "gap exceeds threshold " << c.get("eval.gap_threshold") << "%\n";
  return g.exceeded ? kExitGap : kExitOk;
}

int cmd_oracle(const ExperimentConfig& c, const CommandOptions& opts, std::ostream& out) {
  ProblemInstance inst = instance_from_config(c);
  DemandModel model = demand_from_config(c, inst.demand_cols());
  TrainConfig tc = train_config_from_config(c);
  const std::string name = c.get("oracle.kind");
  const bool needs_data = name != "dp" && name != "transshipment_bound";
  Dataset data;
  if (needs_data) data = load_or_build_dataset(c, inst, model);
  const fs::path dir = prepare_run_dir("oracle", c, opts);
  OracleValue v = cached_oracle(name, c, inst, model, data, test_spec(tc, opts.parallelism),
                                resolve_out_root(opts.out_root));
  write_file(dir / "oracle.json",
             nlohmann::json({{"name", v.name}, {"cost", v.cost}, {"detail", v.detail}}).dump(2) + "\n");
  write_file(dir / "metrics.csv", "oracle,cost\n" + v.name + "," + fmt(v.cost) + "\n");
  write_file(dir / "run.json",
             nlohmann::json({{"command", "oracle"}, {"fingerprint", c.fingerprint()},
                             {"oracle", v.name}, {"cost", v.cost}}).dump(2) + "\n");
  char buf[128];
  std::snprintf(buf, sizeof buf, "oracle %s = %.4f\n", v.name.c_str(), v.cost);
  out << buf;
  return kExitOk;
}

// Cartesian product over [grid] entries "section.key = v1 | v2 | ...".
std::vector<std::vector<std::pair<std::string, std::string>>> grid_points(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& [key, value] : c.section("grid")) {
    std::vector<std::string> vals;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, '|')) {
      const auto b = item.find_first_not_of(' ');
      const auto e = item.find_last_not_of(' ');
      if (b != std::string::npos) vals.push_back(item.substr(b, e - b + 1));
    }
    if (vals.empty()) throw ConfigError("field grid." + key + ": no values");
    axes.emplace_back(key, vals);
  }
  if (axes.empty()) throw ConfigError("bench: the [grid] section is empty");
  std::vector<std::vector<std::pair<std::string, std::string>>> points{{}};
  for (const auto& [key, vals] : axes) {
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& p : points)
      for (const std::string& v : vals) {
        auto q = p;
        q.emplace_back(key, v);
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  return points;
}

int cmd_bench(const ExperimentConfig& c, const CommandOptions& opts, std::ostream& out) {
  const auto points = grid_points(c);
  const double solved_gap = c.number_or("bench.solved_gap", 1.0);
  const fs::path dir = prepare_run_dir("bench", c, opts);
  std::ostringstream table;
  for (const auto& [key, v] : points.front()) table << key << ',';
  table << "test_cost,oracle,oracle_cost,gap_pct,solved\n";
  int solved = 0;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& point : points) {
    ExperimentConfig pc = c;
    for (const auto& key : c.section("grid")) pc.erase("grid." + key.first);
    for (const auto& [key, v] : point) pc.set(key, v);
    ProblemInstance inst = instance_from_config(pc);
    DemandModel model = demand_from_config(pc, inst.demand_cols());
    TrainConfig tc = train_config_from_config(pc);
    tc.parallelism = opts.parallelism;
    Dataset data = load_or_build_dataset(pc, inst, model);
    std::unique_ptr<Policy> policy = make_policy(pc, inst, model, data.mu_hat);
    hdpo_train(*policy, data.train, data.dev, inst, tc);
    const EvalSpec ts = test_spec(tc, opts.parallelism);
    const double test = evaluate(*policy, data.test, inst, ts);
    const std::string oname = pc.get("eval.oracle");
    OracleValue o = cached_oracle(oname, pc, inst, model, data, ts, resolve_out_root(opts.out_root));
    const double gap = gap_percent(test, o.cost);
    const bool ok = gap <= solved_gap;
    solved += ok;
    nlohmann::json row = nlohmann::json::object();
    for (const auto& [key, v] : point) {
      table << v << ',';
      row[key] = v;
    }
    table << fmt(test) << ',' << o.name << ',' << fmt(o.cost) << ',' << fmt(gap) << ','
          << (ok ? 1 : 0) << '\n';
    row["test_cost"] = test;
    row["oracle_cost"] = o.cost;
    row["gap_pct"] = gap;
    rows.push_back(row);
    out << "bench point " << rows.size() << "/" << points.size() << ": gap " << fmt(gap) << "%\n";
  }
  write_file(dir / "table.csv", table.str());
  write_file(dir / "metrics.csv", table.str());
  write_file(dir / "run.json",
             nlohmann::json({{"command", "bench"}, {"fingerprint", c.fingerprint()}, {"rows", rows},
                             {"solved", solved}, {"points", points.size()},
                             {"solved_gap_pct", solved_gap}}).dump(2) + "\n");
  out << "solved " << solved << " of " << points.size() << " (gap <= " << fmt(solved_gap) << "%)\n";
  return kExitOk;
}

int cmd_theory(const ExperimentConfig& c, const CommandOptions& opts, std::ostream& out) {
  theory::Primitives pr = theory::Primitives::homogeneous(
      1, c.number_or("theory.gamma_h", 1.2), c.number_or("theory.gamma_l", 1.0),
      c.number_or("theory.q", 0.5), c.number_or("theory.u_lo", 4.0), c.number_or("theory.u_hi", 6.0),
      c.number_or("theory.p", 9.0), c.number_or("theory.h", 1.0), c.number_or("theory.h0", 0.3));
  std::vector<int> Ks = c.has("theory.K") ? c.integers("theory.K") : std::vector<int>{4, 16, 64, 256};
  const int T = static_cast<int>(c.integer_or("theory.T", 50));
  const int N = static_cast<int>(c.integer_or("theory.scenarios", 2000));
  const auto seed = static_cast<std::uint64_t>(c.integer_or("seeds.data", 1));
  theory::Primitives first = theory::Primitives::homogeneous(
      Ks.front(), pr.gamma_h, pr.gamma_l, pr.q, pr.u_lo[0], pr.u_hi[0], pr.p[0], pr.h[0], pr.h0);
  first.validate();
  const fs::path dir = prepare_run_dir("theory", c, opts);
  theory::GapTable tab = theory::gap_scaling_experiment(pr, Ks, T, N, seed);
  write_file(dir / "gap_table.csv", tab.csv());
  write_file(dir / "metrics.csv", tab.csv());
  write_file(dir / "base_levels.json", theory::base_levels(first).to_json().dump(2) + "\n");
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : tab.rows)
    rows.push_back({{"K", r.K}, {"ratio", r.ratio}, {"ratio_stderr", r.ratio_stderr},
                    {"J_pi", r.J_pi}, {"J_hat", r.J_hat}, {"misclassification", r.misclassification},
                    {"markov_bound", r.markov_bound}, {"below_one", r.below_one}});
  write_file(dir / "run.json",
             nlohmann::json({{"command", "theory"}, {"fingerprint", c.fingerprint()}, {"rows", rows},
                             {"exponent", tab.fit_valid ? nlohmann::json(tab.exponent) : nlohmann::json()},
                             {"fit_valid", tab.fit_valid}}).dump(2) + "\n");
  out << tab.csv();
  return kExitOk;
}

// Weeks [start, end) of a full ingested store, with `history` weeks before start.
TraceStore slice_weeks(const TraceStore& full, int start, int end, int history,
                       const std::string& split) {
  if (start - history < 0 || end > full.length() || end <= start)
    throw ConfigError("forecast: week range does not fit the ingested data");
  TraceStore s;
  s.split = split;
  s.T = end - start;
  s.history = history;
  s.demand_cols = 1;
  s.loc_cols = 1;
  s.H = full.H;
  for (int h = 0; h < full.H; ++h)
    for (int t = start - history; t < end; ++t) s.demand.push_back(full.d(h, t, 0));
  for (int h = 0; h < full.H; ++h)
    s.anchor_days.push_back(full.anchor_days.empty()
                                ? 0.0
                                : days_to_anchor(full.anchor_days[h], start - history));
  s.trace_ids = full.trace_ids;
  s.on_hand.assign(s.H, 0.0);
  s.wh_on_hand.assign(s.H, 0.0);
  return s;
}

void attach_primitives(TraceStore& s, const PrimitiveMeta& meta, std::uint64_t seed) {
  SampledPrimitives prim = sample_primitives(meta, s.H, seed);
  s.p = prim.p;
  s.lead = prim.lead;
  s.slots = std::max(0, meta.lead_max - 1);
  s.pipeline.assign(static_cast<std::size_t>(s.H) * s.slots, 0.0);
}

int cmd_forecast(const ExperimentConfig& c, const CommandOptions& opts, std::ostream& out) {
  using namespace nv;
  SeasonalConfig sc;
  sc.base_lo = c.number_or("seasonal.base_lo", sc.base_lo);
  sc.base_hi = c.number_or("seasonal.base_hi", sc.base_hi);
  sc.amp_lo = c.number_or("seasonal.amp_lo", sc.amp_lo);
  sc.amp_hi = c.number_or("seasonal.amp_hi", sc.amp_hi);
  sc.spike_lo = c.number_or("seasonal.spike_lo", sc.spike_lo);
  sc.spike_hi = c.number_or("seasonal.spike_hi", sc.spike_hi);
  sc.spike_width_days = c.number_or("seasonal.spike_width_days", sc.spike_width_days);
  sc.meta.p_hat = c.number_or("nv.p_hat", sc.meta.p_hat);
  sc.meta.h = c.number_or("nv.h", sc.meta.h);
  sc.meta.lead_min = static_cast<int>(c.integer_or("nv.lead_min", sc.meta.lead_min));
  sc.meta.lead_max = static_cast<int>(c.integer_or("nv.lead_max", sc.meta.lead_max));
  const DemandMode mode = demand_mode_from_string(c.get_or("nv.mode", "lost"));
  const auto seed = static_cast<std::uint64_t>(c.integer_or("seeds.data", 1));
  const int T_train = static_cast<int>(c.integer_or("nv.train_T", 48));
  const int T_eval = static_cast<int>(c.integer_or("nv.eval_T", 48));
  const std::string source = c.get_or("forecast.source", "synthetic");

  ForecasterConfig fc;
  fc.seed = static_cast<std::uint64_t>(c.integer_or("seeds.init", 1));
  if (c.has("forecast.hidden")) fc.hidden = c.integers("forecast.hidden");
  fc.horizons.clear();
  for (int L = sc.meta.lead_min; L <= sc.meta.lead_max; ++L) fc.horizons.push_back(L + 1);

  TraceStore train, dev, test;
  nlohmann::json ingest = nullptr;
  if (source == "synthetic") {
    train = seasonal_traces(sc, static_cast<int>(c.integer_or("nv.train_H", 2048)), T_train, seed, "train");
    dev = seasonal_traces(sc, static_cast<int>(c.integer_or("nv.dev_H", 1024)), T_train, seed, "dev");
    test = seasonal_traces(sc, static_cast<int>(c.integer_or("nv.test_H", 1024)),
                           T_eval + sc.meta.lead_max + 1, seed, "test");
  } else if (source == "csv") {
    IngestConfig ic;
    ic.date_from = c.get_or("forecast.date_from", "");
    ic.date_to = c.get_or("forecast.date_to", "");
    IngestReport rep;
    TraceStore full = ingest_csv(c.get("forecast.csv_path"), ic, &rep);
    ingest = rep.to_json();
    const int split_week = static_cast<int>(c.integer("forecast.dev_start_week"));
    train = slice_weeks(full, kLookback, split_week, kLookback, "train");
    dev = slice_weeks(full, split_week, full.length(), kLookback, "dev");
    test = dev;
    test.split = "test";
    attach_primitives(train, sc.meta, seed);
    attach_primitives(dev, sc.meta, seed);
    attach_primitives(test, sc.meta, seed);
  } else {
    throw ConfigError("field forecast.source: expected synthetic or csv, got '" + source + "'");
  }
  const fs::path dir = prepare_run_dir("forecast", c, opts);

  QuantileForecaster f(fc);
  ForecastTrainConfig ftc;
  ftc.steps = c.integer_or("forecast.steps", 1000);
  ftc.learning_rate = c.number_or("forecast.learning_rate", 1e-3);
  ftc.batch_size = static_cast<int>(c.integer_or("forecast.batch_size", 1024));
  ftc.seed = static_cast<std::uint64_t>(c.integer_or("seeds.shuffle", 1));
  ForecastSamples strain = forecast_samples(train, fc.horizons, 1);
  ForecastSamples sdev = forecast_samples(dev, fc.horizons, 4);
  ForecastTrainResult fr = train_forecaster(f, strain, sdev, ftc);
  save_checkpoint((dir / "forecaster.ckpt").string(), f.params(), c.fingerprint(),
                  {{"horizons", fc.horizons}, {"hidden", fc.hidden}});
  auto cover = calibration(f, forecast_samples(test, fc.horizons, 4));
  std::ostringstream cal;
  cal << "horizon,tau,coverage\n";
  double worst = 0.0;
  for (std::size_t m = 0; m < cover.size(); ++m)
    for (std::size_t j = 0; j < cover[m].size(); ++j) {
      cal << fc.horizons[m] << ',' << fmt(quantile_levels()[j]) << ',' << fmt(cover[m][j]) << '\n';
      worst = std::max(worst, std::abs(cover[m][j] - quantile_levels()[j]));
    }
  write_file(dir / "calibration.csv", cal.str());
  out << "forecaster dev pinball " << fmt(fr.dev_loss) << ", worst calibration error " << fmt(worst) << "\n";

  std::ostringstream summary;
  summary << "policy,profit,revenue,holding,cost\n";
  nlohmann::json policies = nlohmann::json::object();
  if (c.flag_or("nv.benchmark", true)) {
    attach_forecasts(train, f);
    attach_forecasts(dev, f);
    attach_forecasts(test, f);
    ProblemInstance inst = seasonal_instance(sc, mode);
    TrainConfig tc;
    tc.train_T = T_train;
    tc.dev_T = T_train;
    tc.batch_size = static_cast<int>(c.integer_or("nv.batch_size", 1024));
    tc.max_gradient_steps = c.integer_or("nv.gn_steps", 300);
    tc.eval_every = c.integer_or("nv.eval_every", 50);
    tc.parallelism = opts.parallelism;
    tc.shuffle_seed = static_cast<std::uint64_t>(c.integer_or("seeds.shuffle", 1));
    auto report = [&](const Policy& p) {
      ProfitReport r = evaluate_profit(p, test, inst, T_eval, kLookback, true, fc.horizons);
      write_file(dir / ("policy_" + r.policy + ".csv"), r.csv());
      summary << r.policy << ',' << fmt(r.profit) << ',' << fmt(r.revenue) << ',' << fmt(r.holding)
              << ',' << fmt(r.cost) << '\n';
      policies[r.policy] = {{"profit", r.profit}, {"revenue", r.revenue}, {"holding", r.holding},
                            {"cost", r.cost}};
      out << r.policy << " profit per week " << fmt(r.profit) << "\n";
    };
    for (GnKind k : {GnKind::just_in_time, GnKind::newsvendor, GnKind::returns_newsvendor}) {
      GnConfig g;
      g.kind = k;
      g.horizons = fc.horizons;
      ProblemInstance ri = inst;
      ri.allow_returns = k == GnKind::returns_newsvendor;
      GnPolicy p(g);
      ProfitReport r = evaluate_profit(p, test, ri, T_eval, kLookback, true, fc.horizons);
      write_file(dir / ("policy_" + r.policy + ".csv"), r.csv());
      summary << r.policy << ',' << fmt(r.profit) << ',' << fmt(r.revenue) << ',' << fmt(r.holding)
              << ',' << fmt(r.cost) << '\n';
      policies[r.policy] = {{"profit", r.profit}, {"revenue", r.revenue}, {"holding", r.holding},
                            {"cost", r.cost}};
      out << r.policy << " profit per week " << fmt(r.profit) << "\n";
    }
    for (GnKind k : {GnKind::fixed_quantile, GnKind::transformed_newsvendor}) {
      GnConfig g;
      g.kind = k;
      g.horizons = fc.horizons;
      g.seed = static_cast<std::uint64_t>(c.integer_or("seeds.init", 1));
      GnPolicy p(g);
      TrainConfig gtc = tc;
      gtc.learning_rate = c.number_or(k == GnKind::fixed_quantile ? "nv.fixed_lr" : "nv.transform_lr",
                                      k == GnKind::fixed_quantile ? 3e-2 : 1e-2);
      train_downstream(p, train, dev, inst, gtc);
      report(p);
    }
    LookbackConfig lc;
    lc.seed = static_cast<std::uint64_t>(c.integer_or("seeds.init", 1));
    LookbackPolicy lb(inst, lc);
    TrainConfig htc = tc;
    htc.learning_rate = c.number_or("nv.hdpo_lr", 3e-3);
    htc.max_gradient_steps = c.integer_or("nv.hdpo_steps", 300);
    htc.train_burn_in = kLookback;
    htc.dev_burn_in = kLookback;
    hdpo_train(lb, train, dev, inst, htc);
    report(lb);
  }
  write_file(dir / "summary.csv", summary.str());
  write_file(dir / "metrics.csv", summary.str() + "\n" + cal.str());
  write_file(dir / "run.json",
             nlohmann::json({{"command", "forecast"},
                             {"fingerprint", c.fingerprint()},
                             {"forecaster", {{"train_loss", fr.train_loss}, {"dev_loss", fr.dev_loss},
                                             {"best_steps", fr.best_steps},
                                             {"worst_calibration_error", worst}}},
                             {"ingest", ingest},
                             {"policies", policies}}).dump(2) + "\n");
  return kExitOk;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"datagen", "train", "eval", "oracle",
                                              "bench", "theory", "forecast"};
  return names;
}

std::string resolve_out_root(const std::string& out_root) {
  if (!out_root.empty()) return out_root;
  if (const char* env = std::getenv("HDLAB_OUT"); env && *env) return env;
  return "runs";
}

ExperimentConfig load_config(const CommandOptions& opts) {
  if (opts.config_path.empty()) throw ConfigError("--config is required");
  ExperimentConfig c = ExperimentConfig::load(opts.config_path);
  if (opts.seed) {
    const std::string s = std::to_string(*opts.seed);
    c.set("seeds.data", s);
    c.set("seeds.init", s);
    c.set("seeds.shuffle", s);
  }
  return c;
}

std::unique_ptr<Policy> make_policy(const ExperimentConfig& c, const ProblemInstance& inst,
                                    const DemandModel& model, const std::vector<double>& mu_hat) {
  const std::string kind = c.get("policy.kind");
  const auto seed = static_cast<std::uint64_t>(c.integer_or("seeds.init", 1));
  if (kind == "vanilla") {
    VanillaConfig v;
    if (c.has("policy.hidden")) v.hidden = c.integers("policy.hidden");
    v.feasibility = feasibility_from_string(c.get_or(
        "policy.feasibility",
        inst.topology == Topology::transshipment ? "softmax_no_constant" : "softmax"));
    v.max_order = c.number_or("policy.max_order", 0.0);
    v.feature_scale = c.number_or("policy.feature_scale", 1.0);
    v.seed = seed;
    return std::make_unique<VanillaPolicy>(inst, v, mu_hat);
  }
  if (kind == "symmetry_aware") {
    SymmetryConfig s;
    s.context_dim = static_cast<int>(c.integer_or("policy.context_dim", s.context_dim));
    if (c.has("policy.context_hidden")) s.context_hidden = c.integers("policy.context_hidden");
    if (c.has("policy.warehouse_hidden")) s.warehouse_hidden = c.integers("policy.warehouse_hidden");
    if (c.has("policy.store_hidden")) s.store_hidden = c.integers("policy.store_hidden");
    s.max_order = c.number_or("policy.max_order", 0.0);
    s.feature_scale = c.number_or("policy.feature_scale", 1.0);
    s.seed = seed;
    StorePrimitives prims;
    prims.p = inst.p;
    prims.h = inst.h;
    prims.lead = inst.lead;
    prims.mu = model.column_means(inst.K);
    prims.cv = store_cvs(model, inst.K);
    return std::make_unique<SymmetryAwarePolicy>(inst, s, prims, mu_hat);
  }
  if (kind == "base_stock") {
    return std::make_unique<BaseStockPolicy>(c.number("policy.level"));
  }
  if (kind == "echelon_stock") {
    std::vector<double> levels = c.numbers("policy.levels");
    return std::make_unique<EchelonPolicy>(levels);
  }
  throw ConfigError("field policy.kind: unknown policy '" + kind + "'");
}

double gap_percent(double cost, double oracle) {
  if (!(std::abs(oracle) > 0)) throw ConfigError("gap: oracle cost is zero");
  return 100.0 * (cost - oracle) / oracle;
}

OracleValue compute_oracle(const std::string& name, const ExperimentConfig& c,
                           const ProblemInstance& inst, const DemandModel& model,
                           const Dataset& data, const EvalSpec& test) {
  OracleValue v;
  v.name = name;
  auto require = [&](bool ok, const std::string& what) {
    if (!ok)
      throw ConfigError("oracle " + name + " does not apply to topology " + to_string(inst.topology) +
                        " with " + to_string(inst.mode) + " demand: " + what);
  };
  if (name == "newsvendor") {
    require(inst.topology == Topology::single_store && inst.mode == DemandMode::backlogged,
            "needs a backlogged single store");
    const double level = newsvendor_level(model, inst.p[0], inst.h[0], inst.lead[0],
                                          static_cast<std::uint64_t>(c.integer_or("seeds.data", 1)));
    BaseStockPolicy bs(level);
    v.cost = evaluate(bs, data.test, inst, test);
    v.detail = {{"level", level}};
  } else if (name == "dp") {
    require(inst.topology == Topology::single_store && inst.mode == DemandMode::lost &&
                model.kind == DemandModel::Kind::poisson,
            "needs a lost-demand single store with Poisson demand");
    DpConfig dc;
    dc.bound = static_cast<int>(c.integer_or("oracle.dp_bound", 0));
    DpResult r = dp_lost_demand(model.lambda, inst.p[0], inst.h[0], inst.lead[0], dc);
    v.cost = r.average_cost;
    v.detail = {{"bound", r.bound}, {"iterations", r.iterations}, {"boundary_mass", r.boundary_mass}};
  } else if (name == "cbs") {
    require(inst.topology == Topology::single_store, "needs a single store");
    const TrainConfig tc = train_config_from_config(c);
    EvalSpec search = test;
    search.horizon = tc.dev_T;
    search.burn_in = tc.dev_burn_in;
    CbsResult r = cbs_search(inst, data.dev, search, model.column_means(1)[0],
                             c.flag_or("oracle.cbs_integer", model.kind == DemandModel::Kind::poisson));
    CappedBaseStockPolicy p(r.level, r.cap);
    v.cost = evaluate(p, data.test, inst, test);
    v.detail = {{"level", r.level}, {"cap", r.cap}, {"search_cost", r.cost},
                {"evaluations", r.evaluations}};
  } else if (name == "echelon") {
    require(inst.topology == Topology::serial, "needs a serial system");
    EchelonSearchConfig ec;
    ec.train = train_config_from_config(c);
    ec.train.learning_rate = c.number_or("oracle.echelon_lr", 0.05);
    ec.train.max_gradient_steps = c.integer_or("oracle.echelon_steps", 400);
    EchelonResult r = echelon_search(inst, data.train, data.dev, model.column_means(1)[0], ec);
    EchelonPolicy p(r.levels);
    v.cost = evaluate(p, data.test, inst, test);
    v.detail = {{"levels", r.levels}, {"dev_cost", r.cost}, {"start_costs", r.start_costs}};
  } else if (name == "transshipment_bound") {
    require(inst.topology == Topology::transshipment && model.kind == DemandModel::Kind::corr_normal,
            "needs a transshipment system with correlated normal demand");
    std::vector<double> sigma(inst.K);
    for (int k = 0; k < inst.K; ++k) sigma[k] = model.means[k] * model.cvs[k];
    TransshipmentBound b = transshipment_bound(inst.K, inst.p[0], inst.h[0], inst.L0, inst.lead[0],
                                               model.means, constant_correlation_cov(sigma, model.rho));
    v.cost = b.per_store;
    v.detail = {{"S0", b.S0}, {"total", b.total}, {"mu_G", b.mu_G}, {"sigma_G", b.sigma_G}};
  } else {
    throw ConfigError("unknown oracle '" + name + "'");
  }
  return v;
}

int run_command(const std::string& name, const CommandOptions& opts, std::ostream& out,
                std::ostream& err) {
  try {
    if (opts.parallelism < 1) throw ConfigError("--parallelism must be >= 1");
    ExperimentConfig c = load_config(opts);
    if (name == "datagen") return cmd_datagen(c, opts, out);
    if (name == "train") return cmd_train(c, opts, out);
    if (name == "eval") return cmd_eval(c, opts, out);
    if (name == "oracle") return cmd_oracle(c, opts, out);
    if (name == "bench") return cmd_bench(c, opts, out);
    if (name == "theory") return cmd_theory(c, opts, out);
    if (name == "forecast") return cmd_forecast(c, opts, out);
    throw ConfigError("unknown command " + name);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace hdlab
