#include "hdlab/config.hpp"

#include <openssl/evp.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hdlab/error.hpp"

namespace hdlab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Trims every list element: "1, 2 ,3" -> "1,2,3".
std::string normalize(const std::string& v) {
  std::string out;
  std::stringstream ss(v);
  std::string item;
  bool first = true;
  while (std::getline(ss, item, ',')) {
    if (!first) out += ',';
    out += trim(item);
    first = false;
  }
  if (!v.empty() && v.back() == ',') out += ',';
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("field " + key + ": expected a number, got '" + s + "'");
  return v;
}

long parse_long(const std::string& key, const std::string& s) {
  long v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("field " + key + ": expected an integer, got '" + s + "'");
  return v;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      c.set(name, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) c.set(name + "." + key, leaf.data());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream o;
  std::string current;
  for (const auto& [key, value] : kv_)
    if (key.find('.') == std::string::npos) o << key << " = " << value << '\n';
  for (const auto& [key, value] : kv_) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) continue;
    const std::string sec = key.substr(0, dot);
    if (sec != current) {
      if (o.tellp() > 0) o << '\n';
      o << '[' << sec << "]\n";
      current = sec;
    }
    o << key.substr(dot + 1) << " = " << value << '\n';
  }
  return o.str();
}

std::string ExperimentConfig::fingerprint() const { return sha256_hex(canonical()); }

const std::string& ExperimentConfig::get(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("missing field " + key);
  return it->second;
}

std::string ExperimentConfig::get_or(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double ExperimentConfig::number(const std::string& key) const { return parse_double(key, get(key)); }

double ExperimentConfig::number_or(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

long ExperimentConfig::integer(const std::string& key) const { return parse_long(key, get(key)); }

long ExperimentConfig::integer_or(const std::string& key, long fallback) const {
  return has(key) ? integer(key) : fallback;
}

bool ExperimentConfig::flag_or(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("field " + key + ": expected true or false, got '" + v + "'");
}

std::vector<double> ExperimentConfig::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& s : split_list(get(key))) out.push_back(parse_double(key, s));
  return out;
}

std::vector<int> ExperimentConfig::integers(const std::string& key) const {
  std::vector<int> out;
  for (const std::string& s : split_list(get(key))) out.push_back(static_cast<int>(parse_long(key, s)));
  return out;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const std::string k = trim(key);
  if (k.empty()) throw ConfigError("config: empty key");
  kv_[k] = normalize(trim(value));
}

std::map<std::string, std::string> ExperimentConfig::section(const std::string& prefix) const {
  std::map<std::string, std::string> out;
  const std::string p = prefix + ".";
  for (auto it = kv_.lower_bound(p); it != kv_.end() && it->first.compare(0, p.size(), p) == 0; ++it)
    out[it->first.substr(p.size())] = it->second;
  return out;
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------- builders

namespace {

template <typename T>
std::vector<T> broadcast(const std::vector<T>& v, int n, const std::string& key) {
  if (static_cast<int>(v.size()) == n) return v;
  if (v.size() == 1) return std::vector<T>(n, v[0]);
  throw ConfigError("field " + key + ": expected 1 or " + std::to_string(n) + " values");
}

}  // namespace

ProblemInstance instance_from_config(const ExperimentConfig& c) {
  ProblemInstance inst;
  inst.topology = topology_from_string(c.get("instance.topology"));
  inst.mode = demand_mode_from_string(c.get_or("instance.mode", "backlogged"));
  inst.K = static_cast<int>(c.integer_or("instance.K", 1));
  inst.p = broadcast(c.numbers("instance.p"), inst.demand_cols(), "instance.p");
  inst.h = broadcast(c.numbers("instance.h"), inst.K, "instance.h");
  inst.lead = broadcast(c.integers("instance.lead"), inst.K, "instance.lead");
  inst.h0 = c.number_or("instance.h0", 0.0);
  inst.beta = c.number_or("instance.beta", 0.0);
  inst.L0 = static_cast<int>(c.integer_or("instance.L0", 0));
  inst.allow_negative_demand = c.flag_or("instance.allow_negative_demand", false);
  inst.validate();
  return inst;
}

DemandModel demand_from_config(const ExperimentConfig& c, int K) {
  DemandModel m;
  m.kind = demand_kind_from_string(c.get("demand.kind"));
  switch (m.kind) {
    case DemandModel::Kind::poisson:
      m.lambda = c.number("demand.lambda");
      break;
    case DemandModel::Kind::trunc_normal:
      m.mu = c.number("demand.mu");
      m.sigma = c.number("demand.sigma");
      break;
    case DemandModel::Kind::corr_normal:
      m.means = broadcast(c.numbers("demand.means"), K, "demand.means");
      m.cvs = broadcast(c.numbers("demand.cvs"), K, "demand.cvs");
      m.rho = c.number_or("demand.rho", 0.0);
      m.truncate = c.flag_or("demand.truncate", true);
      break;
    case DemandModel::Kind::high_low:
      m.gamma_h = c.number("demand.gamma_h");
      m.gamma_l = c.number("demand.gamma_l");
      m.q = c.number("demand.q");
      m.u_lo = broadcast(c.numbers("demand.u_lo"), K, "demand.u_lo");
      m.u_hi = broadcast(c.numbers("demand.u_hi"), K, "demand.u_hi");
      m.require_assumption = c.flag_or("demand.require_assumption", true);
      break;
  }
  m.validate(K);
  return m;
}

DatasetSpec dataset_spec_from_config(const ExperimentConfig& c) {
  DatasetSpec s;
  s.train_H = static_cast<int>(c.integer_or("data.train_H", s.train_H));
  s.dev_H = static_cast<int>(c.integer_or("data.dev_H", s.dev_H));
  s.test_H = static_cast<int>(c.integer_or("data.test_H", s.test_H));
  s.train_T = static_cast<int>(c.integer_or("train.train_T", s.train_T));
  s.dev_T = static_cast<int>(c.integer_or("train.dev_T", s.dev_T));
  s.test_T = static_cast<int>(c.integer_or("train.test_T", s.test_T));
  const std::string init = c.get_or("data.init", "uniform");
  if (init == "uniform")
    s.init = InitMode::uniform;
  else if (init == "zero")
    s.init = InitMode::zero;
  else
    throw ConfigError("field data.init: expected uniform or zero, got '" + init + "'");
  s.seed = static_cast<std::uint64_t>(c.integer_or("seeds.data", 1));
  return s;
}

TrainConfig train_config_from_config(const ExperimentConfig& c) {
  TrainConfig t;
  t.batch_size = static_cast<int>(c.integer_or("train.batch_size", t.batch_size));
  t.learning_rate = c.number_or("train.learning_rate", t.learning_rate);
  t.max_gradient_steps = c.integer_or("train.max_gradient_steps", t.max_gradient_steps);
  t.max_epochs = c.integer_or("train.max_epochs", t.max_epochs);
  t.patience = static_cast<int>(c.integer_or("train.patience", t.patience));
  t.eval_every = c.integer_or("train.eval_every", t.eval_every);
  t.train_T = static_cast<int>(c.integer_or("train.train_T", t.train_T));
  t.train_burn_in = static_cast<int>(c.integer_or("train.train_burn_in", t.train_burn_in));
  t.dev_T = static_cast<int>(c.integer_or("train.dev_T", t.dev_T));
  t.dev_burn_in = static_cast<int>(c.integer_or("train.dev_burn_in", t.dev_burn_in));
  t.test_T = static_cast<int>(c.integer_or("train.test_T", t.test_T));
  t.test_burn_in = static_cast<int>(c.integer_or("train.test_burn_in", t.test_burn_in));
  t.grad_start = static_cast<int>(c.integer_or("train.grad_start", t.grad_start));
  t.round_eval = c.flag_or("train.round_eval", t.round_eval);
  t.shard_rows = static_cast<int>(c.integer_or("train.shard_rows", t.shard_rows));
  t.shuffle_seed = static_cast<std::uint64_t>(c.integer_or("seeds.shuffle", 1));
  if (t.batch_size < 1 || !(t.learning_rate > 0) || t.max_gradient_steps < 0)
    throw ConfigError("train: batch_size and learning_rate must be positive");
  return t;
}

}  // namespace hdlab
