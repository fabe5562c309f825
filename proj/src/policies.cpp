#include "hdlab/policies.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace hdlab {

FeasibilityKind feasibility_from_string(const std::string& s) {
  if (s == "proportional") return FeasibilityKind::proportional;
  if (s == "softmax") return FeasibilityKind::softmax;
  if (s == "softmax_no_constant") return FeasibilityKind::softmax_no_constant;
  if (s == "serial_sigmoid") return FeasibilityKind::serial_sigmoid;
  throw ConfigError("unknown feasibility function: " + s);
}

std::string to_string(FeasibilityKind k) {
  switch (k) {
    case FeasibilityKind::proportional: return "proportional";
    case FeasibilityKind::softmax: return "softmax";
    case FeasibilityKind::softmax_no_constant: return "softmax_no_constant";
    case FeasibilityKind::serial_sigmoid: return "serial_sigmoid";
  }
  return "?";
}

Var proportional_allocation(Var I0, Var b) {
  if (I0.cols() != 1 || I0.rows() != b.rows())
    throw ShapeError("proportional_allocation: I0 must be rows x 1");
  Tape& t = *b.tape();
  const Mat bp = b.value().cwiseMax(0.0);
  const Eigen::VectorXd s = bp.rowwise().sum();
  const Eigen::VectorXd i0 = I0.value().col(0);
  Eigen::VectorXd f(s.size());
  for (Eigen::Index r = 0; r < s.size(); ++r)
    f(r) = s(r) > 0.0 ? std::min(1.0, i0(r) / s(r)) : 0.0;
  Mat out = bp.array().colwise() * f.array();
  int ii = I0.id(), bi = b.id();
  return t.record(std::move(out), {I0, b}, [ii, bi](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    const Mat& bv = t.value(bi);
    const Mat bp = bv.cwiseMax(0.0);
    const Eigen::VectorXd s = bp.rowwise().sum();
    const Eigen::VectorXd i0 = t.value(ii).col(0);
    Mat gb = Mat::Zero(bv.rows(), bv.cols());
    Mat gi = Mat::Zero(bv.rows(), 1);
    for (Eigen::Index r = 0; r < bv.rows(); ++r) {
      if (s(r) <= 0.0) continue;
      if (i0(r) >= s(r)) {
        gb.row(r) = g.row(r);
      } else {
        const double gshare = g.row(r).dot(bp.row(r) / s(r));
        const double f = i0(r) / s(r);
        if (f > 0.0) gb.row(r) = (f * (g.row(r).array() - gshare)).matrix();
        gi(r, 0) = gshare;
      }
      for (Eigen::Index k = 0; k < bv.cols(); ++k)
        if (!(bv(r, k) > 0.0)) gb(r, k) = 0.0;
    }
    if (t.wants(bi)) t.accumulate(bi, gb);
    if (t.wants(ii)) t.accumulate(ii, gi);
  });
}

Var enforce(FeasibilityKind kind, Var I0, Var b) {
  switch (kind) {
    case FeasibilityKind::proportional: return proportional_allocation(I0, b);
    case FeasibilityKind::softmax: return mul_col(softmax_with_reserve(b, true), I0);
    case FeasibilityKind::softmax_no_constant:
      return mul_col(softmax_with_reserve(b, false), I0);
    case FeasibilityKind::serial_sigmoid:
      if (I0.rows() != b.rows() || I0.cols() != b.cols())
        throw ShapeError("serial_sigmoid: upstream inventory must match b");
      return mul(sigmoid(b), I0);
  }
  throw ConfigError("unknown feasibility kind");
}

// ---------------------------------------------------------------- Mlp

Mlp::Mlp(ParamSet& ps, const std::string& prefix, int in, const std::vector<int>& hidden,
         int out, std::mt19937_64& rng)
    : in_(in), out_(out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, sizes[l])));
    std::uniform_real_distribution<double> u(-bound, bound);
    Mat W(sizes[l], sizes[l + 1]);
    Mat b(1, sizes[l + 1]);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = u(rng);
    for (Eigen::Index j = 0; j < b.cols(); ++j) b(0, j) = u(rng);
    W_.push_back(ps.add(prefix + ".W" + std::to_string(l), std::move(W)));
    b_.push_back(ps.add(prefix + ".b" + std::to_string(l), std::move(b)));
  }
}

Var Mlp::forward(const std::vector<Var>& theta, Var x) const {
  if (x.cols() != in_)
    throw ShapeError("Mlp: expected " + std::to_string(in_) + " inputs, got " +
                     std::to_string(x.cols()));
  Var h = x;
  for (std::size_t l = 0; l < W_.size(); ++l) {
    h = affine(h, theta[W_[l]], theta[b_[l]]);
    if (l + 1 < W_.size()) h = elu(h);
  }
  return h;
}

void Mlp::zero_output(ParamSet& ps) const {
  ps.value(W_.back()).setZero();
  ps.value(b_.back()).setZero();
}

// ---------------------------------------------------------------- features

namespace {

bool uniform_lead(const ProblemInstance& inst) {
  for (int l : inst.lead)
    if (l != inst.lead[0]) return false;
  return true;
}

}  // namespace

int raw_state_dim(const ProblemInstance& inst) {
  int d = inst.K;
  for (int l : inst.lead) d += l - 1;
  if (inst.has_warehouse()) d += 1 + inst.warehouse_slots();
  return d;
}

Var raw_state_features(Tape& tape, const SystemState& s, const ProblemInstance& inst,
                       double scale) {
  std::vector<Var> parts{s.on_hand};
  if (uniform_lead(inst)) {
    for (int j = 0; j < inst.lead[0] - 1; ++j) parts.push_back(s.pipeline[j]);
  } else {
    for (int k = 0; k < inst.K; ++k)
      for (int j = 0; j < inst.lead[k] - 1; ++j) parts.push_back(col(s.pipeline[j], k));
  }
  if (inst.has_warehouse()) {
    parts.push_back(s.wh_on_hand);
    for (const Var& v : s.wh_pipeline) parts.push_back(v);
  }
  Var x = parts.size() == 1 ? parts[0] : concat_cols(parts);
  (void)tape;
  return scale == 1.0 ? x : hdlab::scale(x, 1.0 / scale);
}

double default_max_order(const std::vector<double>& mu_hat, const ProblemInstance& inst) {
  if (inst.topology == Topology::serial) return 4.0 * mu_hat.at(inst.K - 1);
  return 4.0 * std::accumulate(mu_hat.begin(), mu_hat.end(), 0.0);
}

// ---------------------------------------------------------------- VanillaPolicy

VanillaPolicy::VanillaPolicy(const ProblemInstance& inst, const VanillaConfig& cfg,
                             const std::vector<double>& mu_hat)
    : inst_(inst), cfg_(cfg) {
  inst_.validate();
  M_ = cfg.max_order > 0 ? cfg.max_order : default_max_order(mu_hat, inst_);
  int out = inst_.topology == Topology::single_store ? 1
            : inst_.topology == Topology::serial    ? inst_.K
                                                    : inst_.K + 1;
  std::mt19937_64 rng(cfg.seed);
  net_ = Mlp(ps_, "net", raw_state_dim(inst_), cfg.hidden, out, rng);
}

Action VanillaPolicy::act(Tape& tape, const std::vector<Var>& theta,
                          const Observation& obs) const {
  Var x = raw_state_features(tape, obs.state, inst_, cfg_.feature_scale);
  Var z = net_.forward(theta, x);
  if (inst_.topology == Topology::serial) return serial_forward(tape, z, obs);
  return vanilla_forward(tape, z, obs);
}

Action VanillaPolicy::vanilla_forward(Tape& tape, Var z, const Observation& obs) const {
  (void)tape;
  Action a;
  if (inst_.topology == Topology::single_store) {
    a.orders = scale(softplus(shift(z, 1.0)), cfg_.feature_scale);
    return a;
  }
  a.wh_order = scale(sigmoid(col(z, 0)), M_);
  a.orders = enforce(cfg_.feasibility, obs.state.wh_on_hand, cols(z, 1, inst_.K));
  return a;
}

Action VanillaPolicy::serial_forward(Tape& tape, Var z, const Observation& obs) const {
  (void)tape;
  Action a;
  Var first = scale(sigmoid(col(z, 0)), M_);
  if (inst_.K == 1) {
    a.orders = first;
    return a;
  }
  Var upstream = relu(cols(obs.state.on_hand, 0, inst_.K - 1));
  Var transfers = enforce(FeasibilityKind::serial_sigmoid, upstream, cols(z, 1, inst_.K - 1));
  a.orders = concat_cols({first, transfers});
  return a;
}

// ---------------------------------------------------------------- SymmetryAwarePolicy

SymmetryAwarePolicy::SymmetryAwarePolicy(const ProblemInstance& inst, const SymmetryConfig& cfg,
                                         const StorePrimitives& prims,
                                         const std::vector<double>& mu_hat)
    : inst_(inst), cfg_(cfg), prims_(prims) {
  inst_.validate();
  if (inst_.topology != Topology::warehouse_stores && inst_.topology != Topology::transshipment)
    throw ConfigError("symmetry-aware policy requires a warehouse topology");
  const int K = inst_.K;
  if (static_cast<int>(prims.p.size()) != K || static_cast<int>(prims.h.size()) != K ||
      static_cast<int>(prims.mu.size()) != K || static_cast<int>(prims.cv.size()) != K ||
      static_cast<int>(prims.lead.size()) != K)
    throw ConfigError("symmetry-aware policy: primitives must have K entries each");
  M_ = cfg.max_order > 0 ? cfg.max_order : default_max_order(mu_hat, inst_);
  store_slots_ = inst_.pipeline_slots();
  std::mt19937_64 rng(cfg.seed);
  const int d = cfg.context_dim;
  if (d > 0)
    context_net_ = Mlp(ps_, "context", raw_state_dim(inst_), cfg.context_hidden, d, rng);
  warehouse_net_ = Mlp(ps_, "warehouse", 1 + inst_.warehouse_slots() + d, cfg.warehouse_hidden, 1,
                       rng);
  store_net_ = Mlp(ps_, "store", 1 + store_slots_ + 5 + d, cfg.store_hidden, 1, rng);
}

Var SymmetryAwarePolicy::context(Tape& tape, const std::vector<Var>& theta,
                                 const Observation& obs) const {
  Var x = raw_state_features(tape, obs.state, inst_, cfg_.feature_scale);
  return sigmoid(context_net_.forward(theta, x));
}

Var SymmetryAwarePolicy::store_outputs(Tape& tape, const std::vector<Var>& theta,
                                       const Observation& obs) const {
  const int K = inst_.K;
  const Eigen::Index rows = obs.state.on_hand.rows();
  std::optional<Var> ctx;
  if (cfg_.context_dim > 0) ctx = context(tape, theta, obs);
  const double sc = 1.0 / cfg_.feature_scale;
  std::vector<Var> blocks;
  blocks.reserve(K);
  for (int k = 0; k < K; ++k) {
    std::vector<Var> parts{col(obs.state.on_hand, k)};
    for (int j = 0; j < store_slots_; ++j) parts.push_back(col(obs.state.pipeline[j], k));
    Mat r(rows, 5);
    r.col(0).setConstant(prims_.p[k]);
    r.col(1).setConstant(prims_.h[k]);
    r.col(2).setConstant(static_cast<double>(prims_.lead[k]));
    r.col(3).setConstant(prims_.mu[k] * sc);
    r.col(4).setConstant(prims_.cv[k]);
    Var local = scale(concat_cols(parts), sc);
    std::vector<Var> in{local, tape.constant(std::move(r))};
    if (ctx) in.push_back(*ctx);
    blocks.push_back(concat_cols(in));
  }
  Var out = store_net_.forward(theta, vstack(blocks));
  return scale(softplus(unstack_col(out, K)), cfg_.feature_scale);
}

Action SymmetryAwarePolicy::act(Tape& tape, const std::vector<Var>& theta,
                                const Observation& obs) const {
  Action a;
  Var b = store_outputs(tape, theta, obs);
  std::vector<Var> wparts{obs.state.wh_on_hand};
  for (const Var& v : obs.state.wh_pipeline) wparts.push_back(v);
  Var wl = scale(concat_cols(wparts), 1.0 / cfg_.feature_scale);
  std::vector<Var> win{wl};
  if (cfg_.context_dim > 0) win.push_back(context(tape, theta, obs));
  a.wh_order = scale(sigmoid(warehouse_net_.forward(theta, concat_cols(win))), M_);
  a.orders = proportional_allocation(obs.state.wh_on_hand, b);
  return a;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'H', 'D', 'L', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& o, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  o.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw Error("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& params,
                     const std::string& fingerprint, const nlohmann::json& meta) {
  nlohmann::json hdr = {{"format", "hdlab-checkpoint"},
                        {"version", 1},
                        {"order", "row-major"},
                        {"fingerprint", fingerprint},
                        {"meta", meta}};
  nlohmann::json arrays = nlohmann::json::array();
  for (int i = 0; i < params.size(); ++i)
    arrays.push_back({{"name", params.name(i)},
                      {"rows", params.value(i).rows()},
                      {"cols", params.value(i).cols()}});
  hdr["arrays"] = arrays;
  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  if (!o) throw Error("cannot write checkpoint " + path);
  std::string h = hdr.dump();
  o.write(kMagic, 8);
  put_u64(o, h.size());
  o.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (int i = 0; i < params.size(); ++i) {
    const Mat& m = params.value(i);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put_u64(o, std::bit_cast<std::uint64_t>(m(r, c)));
  }
  if (!o) throw Error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw Error("not a checkpoint: " + path);
  std::uint64_t n = get_u64(in);
  std::string h(n, '\0');
  in.read(h.data(), static_cast<std::streamsize>(n));
  nlohmann::json hdr = nlohmann::json::parse(h);
  Checkpoint ck;
  ck.fingerprint = hdr.at("fingerprint");
  ck.meta = hdr.value("meta", nlohmann::json::object());
  for (const auto& a : hdr.at("arrays")) {
    Eigen::Index rows = a.at("rows"), cols = a.at("cols");
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = std::bit_cast<double>(get_u64(in));
    ck.params.add(a.at("name"), std::move(m));
  }
  return ck;
}

void assign_params(ParamSet& dst, const ParamSet& src) {
  if (dst.size() != src.size()) throw ConfigError("assign_params: parameter count mismatch");
  for (int i = 0; i < dst.size(); ++i) {
    int j = src.find(dst.name(i));
    if (j < 0) throw ConfigError("assign_params: missing parameter " + dst.name(i));
    if (src.value(j).rows() != dst.value(i).rows() || src.value(j).cols() != dst.value(i).cols())
      throw ShapeError("assign_params: shape mismatch for " + dst.name(i));
    dst.value(i) = src.value(j);
  }
}

}  // namespace hdlab
