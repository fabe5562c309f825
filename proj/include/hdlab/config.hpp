#pragma once

// Experiment configuration: INI sections of key = value pairs, addressed as
// "section.key". The canonical form sorts sections and keys and normalizes
// whitespace; the fingerprint is the SHA-256 of that form.

#include <map>
#include <string>
#include <vector>

#include "hdlab/envsim.hpp"
#include "hdlab/scenarios.hpp"
#include "hdlab/trainer.hpp"

namespace hdlab {

class ExperimentConfig {
 public:
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::string& path);

  std::string canonical() const;
  std::string fingerprint() const;

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  // Throws ConfigError("missing field <key>").
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  long integer(const std::string& key) const;
  long integer_or(const std::string& key, long fallback) const;
  bool flag_or(const std::string& key, bool fallback) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<int> integers(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  void erase(const std::string& key) { kv_.erase(key); }
  const std::map<std::string, std::string>& entries() const { return kv_; }
  // Entries under "prefix.", with the prefix removed.
  std::map<std::string, std::string> section(const std::string& prefix) const;

  bool operator==(const ExperimentConfig& o) const { return kv_ == o.kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

std::string sha256_hex(const std::string& data);

ProblemInstance instance_from_config(const ExperimentConfig& c);
DemandModel demand_from_config(const ExperimentConfig& c, int demand_cols);
DatasetSpec dataset_spec_from_config(const ExperimentConfig& c);
TrainConfig train_config_from_config(const ExperimentConfig& c);

}  // namespace hdlab
