#include "hdlab/scenarios.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace hdlab {

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

namespace {

std::uint64_t split_stream(const std::string& split) {
  if (split == "train") return 1;
  if (split == "dev") return 2;
  if (split == "test") return 3;
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : split) h = (h ^ c) * 1099511628211ULL;
  return h;
}

constexpr std::uint64_t kInitStream = 1000;
constexpr std::uint64_t kPrimitiveStream = 2000;

}  // namespace

DemandModel::Kind demand_kind_from_string(const std::string& s) {
  if (s == "poisson") return DemandModel::Kind::poisson;
  if (s == "trunc_normal") return DemandModel::Kind::trunc_normal;
  if (s == "corr_normal") return DemandModel::Kind::corr_normal;
  if (s == "high_low") return DemandModel::Kind::high_low;
  throw ConfigError("unknown demand model: " + s);
}

std::string to_string(DemandModel::Kind k) {
  switch (k) {
    case DemandModel::Kind::poisson: return "poisson";
    case DemandModel::Kind::trunc_normal: return "trunc_normal";
    case DemandModel::Kind::corr_normal: return "corr_normal";
    case DemandModel::Kind::high_low: return "high_low";
  }
  return "?";
}

void DemandModel::validate(int K) const {
  switch (kind) {
    case Kind::poisson:
      if (!(lambda >= 0)) throw ConfigError("demand: poisson mean must be >= 0");
      break;
    case Kind::trunc_normal:
      if (!(sigma > 0)) throw ConfigError("demand: sigma must be > 0");
      break;
    case Kind::corr_normal:
      if (static_cast<int>(means.size()) != K || static_cast<int>(cvs.size()) != K)
        throw ConfigError("demand: corr_normal needs K means and K cvs");
      for (double c : cvs)
        if (!(c > 0)) throw ConfigError("demand: coefficients of variation must be > 0");
      if (rho <= -1.0 || rho >= 1.0) throw ConfigError("demand: correlation must lie in (-1, 1)");
      break;
    case Kind::high_low:
      if (!(q > 0 && q < 1)) throw ConfigError("demand: q must lie in (0, 1)");
      if (!(gamma_l > 0 && gamma_l < gamma_h))
        throw ConfigError("demand: need 0 < gamma_l < gamma_h");
      if (static_cast<int>(u_lo.size()) != K || static_cast<int>(u_hi.size()) != K)
        throw ConfigError("demand: high_low needs K lower and K upper bounds");
      for (int k = 0; k < K; ++k) {
        if (!(u_lo[k] > 0 && u_lo[k] <= u_hi[k]))
          throw ConfigError("demand: need 0 < u_lo <= u_hi");
        if (require_assumption && gamma_l * u_lo[k] < gamma_h * u_hi[k] - gamma_l * u_lo[k])
          throw ConfigError("demand: gamma_l*u_lo >= gamma_h*u_hi - gamma_l*u_lo violated at store " +
                            std::to_string(k));
      }
      break;
  }
}

std::vector<double> DemandModel::column_means(int K) const {
  std::vector<double> m(K, 0.0);
  for (int k = 0; k < K; ++k) {
    switch (kind) {
      case Kind::poisson: m[k] = lambda; break;
      case Kind::trunc_normal: m[k] = mu; break;
      case Kind::corr_normal: m[k] = means[k]; break;
      case Kind::high_low:
        m[k] = (q * gamma_h + (1 - q) * gamma_l) * 0.5 * (u_lo[k] + u_hi[k]);
        break;
    }
  }
  return m;
}

std::vector<double> TraceStore::sample_means() const {
  std::vector<double> m(demand_cols, 0.0);
  if (H == 0 || length() == 0) return m;
  for (int h = 0; h < H; ++h)
    for (int t = 0; t < length(); ++t)
      for (int k = 0; k < demand_cols; ++k) m[k] += d(h, t, k);
  for (double& v : m) v /= static_cast<double>(H) * length();
  return m;
}

bool TraceStore::operator==(const TraceStore& o) const {
  return split == o.split && T == o.T && history == o.history && demand_cols == o.demand_cols &&
         loc_cols == o.loc_cols && H == o.H && slots == o.slots && wh_slots == o.wh_slots &&
         demand == o.demand && on_hand == o.on_hand && pipeline == o.pipeline &&
         wh_on_hand == o.wh_on_hand && wh_pipeline == o.wh_pipeline && p == o.p &&
         lead == o.lead && anchor_days == o.anchor_days && aux_dim == o.aux_dim && aux == o.aux &&
         trace_ids == o.trace_ids;
}

TraceStore generate(const DemandModel& model, int T, int K, int H, std::uint64_t seed,
                    const std::string& split, int history) {
  model.validate(K);
  if (T < 0 || H < 0 || history < 0) throw ConfigError("generate: sizes must be nonnegative");
  TraceStore s;
  s.split = split;
  s.T = T;
  s.history = history;
  s.demand_cols = K;
  s.loc_cols = K;
  s.H = H;
  s.demand.assign(static_cast<std::size_t>(H) * s.length() * K, 0.0);

  Eigen::MatrixXd chol;
  std::vector<double> sd;
  if (model.kind == DemandModel::Kind::corr_normal) {
    sd.resize(K);
    for (int k = 0; k < K; ++k) sd[k] = model.means[k] * model.cvs[k];
    Eigen::MatrixXd cov(K, K);
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) cov(i, j) = (i == j ? 1.0 : model.rho) * sd[i] * sd[j];
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw ConfigError("generate: correlation matrix is not PSD");
    chol = llt.matrixL();
  }

  const std::uint64_t stream = split_stream(split);
  for (int h = 0; h < H; ++h) {
    std::mt19937_64 rng = derived_rng(seed, stream, static_cast<std::uint64_t>(h));
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::poisson_distribution<int> pois(model.lambda > 0 ? model.lambda : 1.0);
    Eigen::VectorXd z(K);
    for (int t = 0; t < s.length(); ++t) {
      switch (model.kind) {
        case DemandModel::Kind::poisson:
          for (int k = 0; k < K; ++k) s.d(h, t, k) = model.lambda > 0 ? pois(rng) : 0.0;
          break;
        case DemandModel::Kind::trunc_normal:
          for (int k = 0; k < K; ++k)
            s.d(h, t, k) = std::max(0.0, model.mu + model.sigma * n01(rng));
          break;
        case DemandModel::Kind::corr_normal: {
          for (int k = 0; k < K; ++k) z(k) = n01(rng);
          Eigen::VectorXd x = chol * z;
          for (int k = 0; k < K; ++k) {
            double v = model.means[k] + x(k);
            s.d(h, t, k) = model.truncate ? std::max(0.0, v) : v;
          }
          break;
        }
        case DemandModel::Kind::high_low: {
          double B = u01(rng) < model.q ? model.gamma_h : model.gamma_l;
          for (int k = 0; k < K; ++k)
            s.d(h, t, k) = B * (model.u_lo[k] + (model.u_hi[k] - model.u_lo[k]) * u01(rng));
          break;
        }
      }
    }
  }
  return s;
}

void attach_initial_states(TraceStore& s, const ProblemInstance& inst, InitMode mode,
                           const std::vector<double>& mu_hat, std::uint64_t seed) {
  s.loc_cols = inst.K;
  s.slots = inst.pipeline_slots();
  s.wh_slots = inst.warehouse_slots();
  if (!s.lead.empty()) {
    int maxl = *std::max_element(s.lead.begin(), s.lead.end());
    s.slots = std::max(s.slots, maxl - 1);
  }
  const int K = inst.K;
  s.on_hand.assign(static_cast<std::size_t>(s.H) * K, 0.0);
  s.pipeline.assign(static_cast<std::size_t>(s.H) * s.slots * K, 0.0);
  s.wh_on_hand.assign(s.H, 0.0);
  s.wh_pipeline.assign(static_cast<std::size_t>(s.H) * s.wh_slots, 0.0);
  const std::uint64_t stream = kInitStream + split_stream(s.split);
  ProblemInstance wide = inst;
  if (!s.lead.empty()) wide.lead.assign(K, s.slots + 1);
  for (int h = 0; h < s.H; ++h) {
    std::mt19937_64 rng = derived_rng(seed, stream, static_cast<std::uint64_t>(h));
    Eigen::MatrixXi lead(1, K);
    for (int k = 0; k < K; ++k)
      lead(0, k) = s.lead.empty() ? inst.lead[k] : s.lead[static_cast<std::size_t>(h) * K + k];
    InitialState st = initialize(wide, mode, mu_hat, 1, rng, &lead);
    for (int k = 0; k < K; ++k) {
      s.on_hand[static_cast<std::size_t>(h) * K + k] = st.on_hand(0, k);
      for (int j = 0; j < s.slots; ++j)
        s.pipeline[(static_cast<std::size_t>(h) * s.slots + j) * K + k] = st.pipeline[j](0, k);
    }
  }
}

SampledPrimitives sample_primitives(const PrimitiveMeta& meta, int H, std::uint64_t seed) {
  if (!(meta.p_hat > 0)) throw ConfigError("sample_primitives: p_hat must be > 0");
  if (meta.lead_min < 1 || meta.lead_max < meta.lead_min)
    throw ConfigError("sample_primitives: invalid lead range");
  SampledPrimitives out;
  out.p.resize(H);
  out.lead.resize(H);
  out.h.assign(H, meta.h);
  for (int i = 0; i < H; ++i) {
    std::mt19937_64 rng = derived_rng(seed, kPrimitiveStream, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> u(0.7, 1.3);
    std::uniform_int_distribution<int> l(meta.lead_min, meta.lead_max);
    out.p[i] = meta.p_hat * u(rng);
    out.lead[i] = l(rng);
  }
  return out;
}

double days_to_anchor(double days_at_zero, int t) {
  double v = std::fmod(days_at_zero - 7.0 * t, 365.0);
  return v < 0 ? v + 365.0 : v;
}

ScenarioBatch make_batch(const TraceStore& s, const ProblemInstance& inst,
                         const std::vector<int>& ids, int horizon) {
  if (horizon > s.T)
    throw ConfigError("make_batch: horizon " + std::to_string(horizon) + " exceeds stored " +
                      std::to_string(s.T));
  if (s.demand_cols != inst.demand_cols() || s.loc_cols != inst.K)
    throw ConfigError("make_batch: trace store does not match the instance layout");
  const int B = static_cast<int>(ids.size());
  const int K = inst.K;
  const int dc = s.demand_cols;
  ScenarioBatch b;
  b.rows = B;
  b.history = s.history;
  b.ids = ids;
  const int len = s.history + horizon;
  b.demand.assign(len, Mat(B, dc));
  for (int t = 0; t < len; ++t)
    for (int r = 0; r < B; ++r)
      for (int k = 0; k < dc; ++k) b.demand[t](r, k) = s.d(ids[r], t, k);
  b.on_hand.resize(B, K);
  b.pipeline.assign(inst.pipeline_slots(), Mat::Zero(B, K));
  int slots = inst.pipeline_slots();
  if (!s.lead.empty()) {
    slots = s.slots;
    b.pipeline.assign(slots, Mat::Zero(B, K));
  }
  b.wh_on_hand = Mat::Zero(B, 1);
  b.wh_pipeline.assign(inst.warehouse_slots(), Mat::Zero(B, 1));
  const bool have_state = !s.on_hand.empty();
  for (int r = 0; r < B; ++r) {
    const std::size_t h = static_cast<std::size_t>(ids[r]);
    for (int k = 0; k < K; ++k) {
      b.on_hand(r, k) = have_state ? s.on_hand[h * K + k] : 0.0;
      for (int j = 0; j < slots && j < s.slots; ++j)
        b.pipeline[j](r, k) = have_state ? s.pipeline[(h * s.slots + j) * K + k] : 0.0;
    }
    if (have_state) {
      b.wh_on_hand(r, 0) = s.wh_on_hand[h];
      for (int j = 0; j < inst.warehouse_slots() && j < s.wh_slots; ++j)
        b.wh_pipeline[j](r, 0) = s.wh_pipeline[h * s.wh_slots + j];
    }
  }
  b.p.resize(B, dc);
  b.h.resize(B, K);
  b.lead.resize(B, K);
  for (int r = 0; r < B; ++r) {
    const std::size_t h = static_cast<std::size_t>(ids[r]);
    for (int k = 0; k < dc; ++k) b.p(r, k) = s.p.empty() ? inst.p[k] : s.p[h * dc + k];
    for (int k = 0; k < K; ++k) {
      b.h(r, k) = inst.h[k];
      b.lead(r, k) = s.lead.empty() ? inst.lead[k] : s.lead[h * K + k];
    }
  }
  // Column 0 holds days to the anchor whenever exogenous features exist.
  const int day_cols = s.anchor_days.empty() && s.aux.empty() ? 0 : 1;
  const int aux_cols = s.aux.empty() ? 0 : s.aux_dim;
  if (day_cols + aux_cols > 0) {
    b.exo.assign(len, Mat(B, day_cols + aux_cols));
    for (int t = 0; t < len; ++t)
      for (int r = 0; r < B; ++r) {
        const std::size_t h = static_cast<std::size_t>(ids[r]);
        if (day_cols)
          b.exo[t](r, 0) =
              s.anchor_days.empty() ? 0.0 : days_to_anchor(s.anchor_days[h], t);
        for (int j = 0; j < aux_cols; ++j)
          b.exo[t](r, day_cols + j) =
              s.aux[(h * static_cast<std::size_t>(s.length()) + t) * aux_cols + j];
      }
  }
  return b;
}

Dataset build_dataset(const ProblemInstance& inst, const DemandModel& model,
                      const DatasetSpec& spec) {
  inst.validate();
  const int dc = inst.demand_cols();
  Dataset ds;
  ds.train = generate(model, spec.train_T, dc, spec.train_H, spec.seed, "train", spec.history);
  ds.dev = generate(model, spec.dev_T, dc, spec.dev_H, spec.seed, "dev", spec.history);
  ds.test = generate(model, spec.test_T, dc, spec.test_H, spec.seed, "test", spec.history);
  std::vector<double> m = ds.train.sample_means();
  if (inst.topology == Topology::serial)
    ds.mu_hat.assign(inst.K, m[0]);
  else
    ds.mu_hat = m;
  for (TraceStore* s : {&ds.train, &ds.dev, &ds.test}) {
    s->loc_cols = inst.K;
    attach_initial_states(*s, inst, spec.init, ds.mu_hat, spec.seed);
  }
  return ds;
}

// ---------------------------------------------------------------- CSV ingestion

namespace {

long days_from_string(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char a = 0, b = 0;
  std::istringstream in(s);
  in >> y >> a >> m >> b >> d;
  if (!in || a != '-' || b != '-') throw Error("bad date");
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                  std::chrono::day{d}};
  if (!ymd.ok()) throw Error("bad date");
  return std::chrono::sys_days(ymd).time_since_epoch().count();
}

// Monday-based week index; day 4 since epoch (1970-01-05) is a Monday.
long week_of(long day) {
  long x = day + 3;
  return x >= 0 ? x / 7 : -((-x + 6) / 7);
}

long monday_of(long week) { return week * 7 - 3; }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) {
    while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) cur.pop_back();
    while (!cur.empty() && cur.front() == ' ') cur.erase(cur.begin());
    out.push_back(cur);
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double days_to_christmas(long day) {
  auto ymd = std::chrono::year_month_day(std::chrono::sys_days(std::chrono::days(day)));
  std::chrono::year_month_day xmas{ymd.year(), std::chrono::December, std::chrono::day{25}};
  long x = std::chrono::sys_days(xmas).time_since_epoch().count();
  if (x < day) {
    std::chrono::year_month_day next{ymd.year() + std::chrono::years(1), std::chrono::December,
                                     std::chrono::day{25}};
    x = std::chrono::sys_days(next).time_since_epoch().count();
  }
  return static_cast<double>(x - day);
}

}  // namespace

nlohmann::json IngestReport::to_json() const {
  return {{"traces_seen", traces_seen},
          {"dropped_perishable", dropped_perishable},
          {"dropped_first_window", dropped_first_window},
          {"dropped_zero_weeks", dropped_zero_weeks},
          {"retained", retained},
          {"weeks", weeks},
          {"warnings", warnings}};
}

TraceStore ingest_csv(const std::string& path, const IngestConfig& cfg, IngestReport* report) {
  std::ifstream in(path);
  if (!in) throw Error("ingest_csv: cannot open " + path);
  IngestReport rep;
  struct Trace {
    std::map<long, double> daily;
    bool perishable = false;
  };
  std::map<std::string, Trace> traces;
  std::string line;
  int line_no = 0;
  bool header_checked = false;
  long min_day = 0, max_day = 0;
  bool any = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv(line);
    if (!header_checked) {
      header_checked = true;
      if (!f.empty() && f[0] == "trace_id") continue;
    }
    if (f.size() < 3 || f.size() > 4) {
      rep.warnings.push_back("line " + std::to_string(line_no) + ": expected 3 or 4 fields");
      continue;
    }
    long day = 0;
    double qty = 0;
    try {
      day = days_from_string(f[1]);
      std::size_t used = 0;
      qty = std::stod(f[2], &used);
      if (used != f[2].size() || !std::isfinite(qty)) throw Error("bad quantity");
    } catch (const std::exception&) {
      rep.warnings.push_back("line " + std::to_string(line_no) + ": malformed date or quantity");
      continue;
    }
    if (f[0].empty()) {
      rep.warnings.push_back("line " + std::to_string(line_no) + ": empty trace id");
      continue;
    }
    Trace& tr = traces[f[0]];
    tr.daily[day] += qty;
    if (f.size() == 4 && (f[3] == "1" || f[3] == "true" || f[3] == "True")) tr.perishable = true;
    if (!any || day < min_day) min_day = day;
    if (!any || day > max_day) max_day = day;
    any = true;
  }
  if (!any) throw Error("ingest_csv: no valid rows in " + path);
  long from = cfg.date_from.empty() ? min_day : days_from_string(cfg.date_from);
  long to = cfg.date_to.empty() ? max_day : days_from_string(cfg.date_to);
  long w0 = week_of(from);
  if (monday_of(w0) < from) ++w0;
  long w1 = week_of(to);
  if (monday_of(w1) + 6 > to) --w1;
  const int weeks = static_cast<int>(std::max(0L, w1 - w0 + 1));
  rep.weeks = weeks;

  TraceStore s;
  s.split = "all";
  s.T = weeks;
  s.demand_cols = 1;
  s.loc_cols = 1;
  for (const auto& [id, tr] : traces) {
    ++rep.traces_seen;
    if (cfg.exclude_perishable && tr.perishable) {
      ++rep.dropped_perishable;
      continue;
    }
    std::vector<double> w(weeks, 0.0);
    for (const auto& [day, q] : tr.daily) {
      long wk = week_of(day);
      if (wk < w0 || wk > w1) continue;
      w[static_cast<std::size_t>(wk - w0)] += q;
    }
    double first = 0;
    for (int i = 0; i < std::min(cfg.first_window, weeks); ++i) first += w[i];
    if (first < cfg.min_first_window_sales) {
      ++rep.dropped_first_window;
      continue;
    }
    int zero_weeks = static_cast<int>(std::count(w.begin(), w.end(), 0.0));
    if (weeks > 0 && static_cast<double>(zero_weeks) >= cfg.zero_week_threshold * weeks) {
      ++rep.dropped_zero_weeks;
      continue;
    }
    s.demand.insert(s.demand.end(), w.begin(), w.end());
    s.trace_ids.push_back(id);
    s.anchor_days.push_back(days_to_christmas(monday_of(w0)));
    ++s.H;
  }
  rep.retained = s.H;
  if (report) *report = rep;
  if (s.H == 0) throw Error("ingest_csv: every trace was filtered out");
  return s;
}

// ---------------------------------------------------------------- persistence

namespace {

constexpr char kMagic[8] = {'H', 'D', 'L', 'T', 'R', 'A', 'C', 'E'};

void put_u64(std::ostream& o, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  o.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw Error("truncated container");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& o, double x) { put_u64(o, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void save_trace_store(const TraceStore& s, const std::string& path) {
  nlohmann::json hdr = {{"format", "hdlab-trace-store"},
                        {"version", 1},
                        {"split", s.split},
                        {"T", s.T},
                        {"history", s.history},
                        {"demand_cols", s.demand_cols},
                        {"loc_cols", s.loc_cols},
                        {"H", s.H},
                        {"slots", s.slots},
                        {"wh_slots", s.wh_slots},
                        {"aux_dim", s.aux_dim},
                        {"trace_ids", s.trace_ids}};
  std::vector<std::pair<std::string, std::vector<double>>> arrays = {
      {"demand", s.demand},         {"on_hand", s.on_hand},   {"pipeline", s.pipeline},
      {"wh_on_hand", s.wh_on_hand}, {"wh_pipeline", s.wh_pipeline}, {"p", s.p},
      {"lead", std::vector<double>(s.lead.begin(), s.lead.end())},
      {"anchor_days", s.anchor_days}, {"aux", s.aux}};
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& [name, v] : arrays) layout.push_back({{"name", name}, {"length", v.size()}});
  hdr["arrays"] = layout;
  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  if (!o) throw Error("cannot write " + path);
  std::string h = hdr.dump();
  o.write(kMagic, 8);
  put_u64(o, h.size());
  o.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& [name, v] : arrays)
    for (double x : v) put_f64(o, x);
  if (!o) throw Error("write failed: " + path);
}

TraceStore load_trace_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw Error("not a trace store: " + path);
  std::uint64_t n = get_u64(in);
  std::string h(n, '\0');
  in.read(h.data(), static_cast<std::streamsize>(n));
  nlohmann::json hdr = nlohmann::json::parse(h);
  TraceStore s;
  s.split = hdr.at("split");
  s.T = hdr.at("T");
  s.history = hdr.at("history");
  s.demand_cols = hdr.at("demand_cols");
  s.loc_cols = hdr.at("loc_cols");
  s.H = hdr.at("H");
  s.slots = hdr.at("slots");
  s.wh_slots = hdr.at("wh_slots");
  s.aux_dim = hdr.value("aux_dim", 0);
  s.trace_ids = hdr.at("trace_ids").get<std::vector<std::string>>();
  for (const auto& a : hdr.at("arrays")) {
    std::string name = a.at("name");
    std::size_t len = a.at("length");
    std::vector<double> v(len);
    for (double& x : v) x = get_f64(in);
    if (name == "demand") s.demand = std::move(v);
    else if (name == "on_hand") s.on_hand = std::move(v);
    else if (name == "pipeline") s.pipeline = std::move(v);
    else if (name == "wh_on_hand") s.wh_on_hand = std::move(v);
    else if (name == "wh_pipeline") s.wh_pipeline = std::move(v);
    else if (name == "p") s.p = std::move(v);
    else if (name == "lead") s.lead.assign(v.begin(), v.end());
    else if (name == "anchor_days") s.anchor_days = std::move(v);
    else if (name == "aux") s.aux = std::move(v);
  }
  return s;
}

}  // namespace hdlab
