#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdlab/envsim.hpp"

namespace hdlab {

enum class FeasibilityKind { proportional, softmax, softmax_no_constant, serial_sigmoid };

FeasibilityKind feasibility_from_string(const std::string& s);
std::string to_string(FeasibilityKind k);

// Allocation of warehouse inventory I0 (rows x 1) given intermediate outputs
// b (rows x K). serial_sigmoid treats I0 as rows x K upstream inventories.
Var enforce(FeasibilityKind kind, Var I0, Var b);

// Proportional allocation: [b]+ * min(1, I0 / sum [b]+); zero when sum is zero.
Var proportional_allocation(Var I0, Var b);

// Fully connected network with ELU hidden layers and a linear output layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamSet& ps, const std::string& prefix, int in, const std::vector<int>& hidden, int out,
      std::mt19937_64& rng);
  Var forward(const std::vector<Var>& theta, Var x) const;
  int in() const { return in_; }
  int out() const { return out_; }
  // Zeroes the output layer so the network starts as the constant 0.
  void zero_output(ParamSet& ps) const;

 private:
  std::vector<int> W_, b_;
  int in_ = 0, out_ = 0;
};

// Store-level primitives fed to the shared store network.
struct StorePrimitives {
  std::vector<double> p, h, mu, cv;
  std::vector<int> lead;
};

struct VanillaConfig {
  std::vector<int> hidden{32, 32, 32};
  FeasibilityKind feasibility = FeasibilityKind::softmax;
  // Warehouse or most-upstream order cap; 0 means derive from demand means.
  double max_order = 0.0;
  double feature_scale = 1.0;
  std::uint64_t seed = 1;
};

class VanillaPolicy : public Policy {
 public:
  VanillaPolicy(const ProblemInstance& inst, const VanillaConfig& cfg,
                const std::vector<double>& mu_hat);
  Action act(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const override;
  ParamSet& params() override { return ps_; }
  const ParamSet& params() const override { return ps_; }
  std::string kind() const override { return "vanilla"; }
  double max_order() const { return M_; }
  int input_dim() const { return net_.in(); }

 private:
  Action vanilla_forward(Tape& tape, Var z, const Observation& obs) const;
  Action serial_forward(Tape& tape, Var z, const Observation& obs) const;
  ProblemInstance inst_;
  VanillaConfig cfg_;
  double M_ = 0.0;
  ParamSet ps_;
  Mlp net_;
};

// Raw state features: on-hand, used pipeline slots, warehouse state; scaled.
Var raw_state_features(Tape& tape, const SystemState& s, const ProblemInstance& inst,
                       double scale);
int raw_state_dim(const ProblemInstance& inst);

struct SymmetryConfig {
  int context_dim = 256;
  std::vector<int> context_hidden{256};
  std::vector<int> warehouse_hidden{16, 16};
  std::vector<int> store_hidden{32, 32};
  double max_order = 0.0;
  double feature_scale = 1.0;
  std::uint64_t seed = 1;
};

class SymmetryAwarePolicy : public Policy {
 public:
  SymmetryAwarePolicy(const ProblemInstance& inst, const SymmetryConfig& cfg,
                      const StorePrimitives& prims, const std::vector<double>& mu_hat);
  Action act(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const override;
  ParamSet& params() override { return ps_; }
  const ParamSet& params() const override { return ps_; }
  std::string kind() const override { return "symmetry_aware"; }
  // Intermediate store outputs b (rows x K) for inspection.
  Var store_outputs(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const;

 private:
  Var context(Tape& tape, const std::vector<Var>& theta, const Observation& obs) const;
  ProblemInstance inst_;
  SymmetryConfig cfg_;
  StorePrimitives prims_;
  double M_ = 0.0;
  ParamSet ps_;
  Mlp context_net_, warehouse_net_, store_net_;
  int store_slots_ = 0;
};

// Sum of per-period demand means across stores, times four.
double default_max_order(const std::vector<double>& mu_hat, const ProblemInstance& inst);

struct Checkpoint {
  ParamSet params;
  std::string fingerprint;
  nlohmann::json meta;
};

void save_checkpoint(const std::string& path, const ParamSet& params,
                     const std::string& fingerprint, const nlohmann::json& meta = {});
Checkpoint load_checkpoint(const std::string& path);
// Copies values by name; throws on any missing name or shape mismatch.
void assign_params(ParamSet& dst, const ParamSet& src);

}  // namespace hdlab
