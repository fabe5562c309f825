#pragma once

// Config-driven commands behind the hdlab executable. Each run writes into
// <out>/<command>-<fingerprint prefix>/ and refuses to touch an existing run
// directory unless forced.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hdlab/config.hpp"
#include "hdlab/envsim.hpp"
#include "hdlab/scenarios.hpp"
#include "hdlab/trainer.hpp"

namespace hdlab {

struct CommandOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;  // overrides every seed in the config
  bool force = false;
  int parallelism = 1;
  std::string out_root;  // empty: $HDLAB_OUT, else "runs"
};

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitGap = 3;  // gap above the configured threshold

const std::vector<std::string>& command_names();

// Runs one command; never throws. Messages go to `out` and `err`.
int run_command(const std::string& name, const CommandOptions& opts, std::ostream& out,
                std::ostream& err);

// Helpers shared with the acceptance harness.
ExperimentConfig load_config(const CommandOptions& opts);
std::string resolve_out_root(const std::string& out_root);
std::unique_ptr<Policy> make_policy(const ExperimentConfig& c, const ProblemInstance& inst,
                                    const DemandModel& model, const std::vector<double>& mu_hat);

struct OracleValue {
  std::string name;
  double cost = 0.0;  // mean cost per store-period
  nlohmann::json detail = nlohmann::json::object();
};

// Named oracle for the configured instance; throws ConfigError when the oracle
// does not apply to the topology.
OracleValue compute_oracle(const std::string& name, const ExperimentConfig& c,
                           const ProblemInstance& inst, const DemandModel& model,
                           const Dataset& data, const EvalSpec& test);

double gap_percent(double cost, double oracle);

}  // namespace hdlab
