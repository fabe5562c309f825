#include "hdlab/diffengine.hpp"

#include <algorithm>
#include <cmath>

namespace hdlab {

namespace {

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                     shape_str(b.value()));
}

}  // namespace

// ---------------------------------------------------------------- ParamSet

int ParamSet::add(const std::string& name, Mat init) {
  if (find(name) >= 0) throw ConfigError("duplicate parameter name: " + name);
  Entry e;
  e.name = name;
  e.m = Mat::Zero(init.rows(), init.cols());
  e.v = Mat::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  return size() - 1;
}

int ParamSet::find(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (entries_[i].name == name) return i;
  return -1;
}

const Mat& ParamSet::at(const std::string& name) const {
  int i = find(name);
  if (i < 0) throw ConfigError("unknown parameter: " + name);
  return entries_[i].value;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

std::vector<Mat> ParamSet::zeros_like() const {
  std::vector<Mat> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(Mat::Zero(e.value.rows(), e.value.cols()));
  return out;
}

void ParamSet::reset_moments() {
  for (auto& e : entries_) {
    e.m.setZero();
    e.v.setZero();
  }
  adam_steps_ = 0;
}

void adam_update(ParamSet& params, const std::vector<Mat>& grads, const AdamConfig& cfg) {
  if (static_cast<int>(grads.size()) != params.size())
    throw ShapeError("adam_update: gradient count does not match parameter count");
  long t = ++params.adam_steps();
  double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (int i = 0; i < params.size(); ++i) {
    Mat& m = params.first_moment(i);
    Mat& v = params.second_moment(i);
    const Mat& g = grads[i];
    if (g.rows() != m.rows() || g.cols() != m.cols())
      throw ShapeError("adam_update: gradient shape mismatch for " + params.name(i));
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    params.value(i).array() -=
        cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  }
}

// ---------------------------------------------------------------- Tape

const Mat& Var::value() const {
  if (!tape_) throw Error("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::check_same_tape(Var v) const {
  if (v.tape() != this) throw Error("Var belongs to a different tape");
}

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Mat value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

std::vector<Var> Tape::bind(const ParamSet& params) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (int i = 0; i < params.size(); ++i) {
    Node n;
    n.value = params.value(i);
    n.requires_grad = true;
    n.param = i;
    Var v = push(std::move(n));
    param_nodes_.push_back(v.id());
    out.push_back(v);
  }
  return out;
}

Var Tape::record(Mat value, std::initializer_list<Var> parents, Backward back) {
  return record(std::move(value), std::vector<Var>(parents), std::move(back));
}

Var Tape::record(Mat value, const std::vector<Var>& parents, Backward back) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    check_same_tape(p);
    if (nodes_[p.id()].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.back = std::move(back);
  return push(std::move(n));
}

void Tape::backward(Var root) {
  check_same_tape(root);
  const Mat& rv = nodes_[root.id()].value;
  if (rv.rows() != 1 || rv.cols() != 1)
    throw ShapeError("backward: root must be scalar, got " + shape_str(rv));
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Mat::Ones(1, 1);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 || !n.back) continue;
    n.back(*this, id);
  }
}

Mat Tape::grad(Var v) const {
  check_same_tape(v);
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

std::vector<Mat> Tape::param_grads(const ParamSet& params) const {
  std::vector<Mat> out = params.zeros_like();
  for (int id : param_nodes_) {
    const Node& n = nodes_[id];
    if (n.param < 0 || n.param >= params.size()) throw Error("param_grads: stale binding");
    if (n.grad.size() != 0) out[n.param] += n.grad;
  }
  return out;
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

// ---------------------------------------------------------------- ops

Activation activation_from_string(const std::string& s) {
  if (s == "elu") return Activation::elu;
  if (s == "softplus") return Activation::softplus;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu_pos" || s == "relu") return Activation::relu_pos;
  throw ConfigError("unknown activation: " + s);
}

Var affine(Var x, Var W, Var b) {
  if (x.cols() != W.rows())
    throw ShapeError("affine: inner dimensions " + shape_str(x.value()) + " * " +
                     shape_str(W.value()));
  if (b.rows() != 1 || b.cols() != W.cols())
    throw ShapeError("affine: bias must be 1x" + std::to_string(W.cols()) + ", got " +
                     shape_str(b.value()));
  Tape& t = *x.tape();
  Mat out = x.value() * W.value();
  out.rowwise() += b.value().row(0);
  int xi = x.id(), wi = W.id(), bi = b.id();
  return t.record(std::move(out), {x, W, b}, [xi, wi, bi](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    if (t.wants(xi)) t.accumulate(xi, g * t.value(wi).transpose());
    if (t.wants(wi)) t.accumulate(wi, t.value(xi).transpose() * g);
    if (t.wants(bi)) t.accumulate(bi, g.colwise().sum());
  });
}

Var matmul(Var x, Var W) {
  if (x.cols() != W.rows())
    throw ShapeError("matmul: inner dimensions " + shape_str(x.value()) + " * " +
                     shape_str(W.value()));
  Tape& t = *x.tape();
  int xi = x.id(), wi = W.id();
  return t.record(x.value() * W.value(), {x, W}, [xi, wi](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    if (t.wants(xi)) t.accumulate(xi, g * t.value(wi).transpose());
    if (t.wants(wi)) t.accumulate(wi, t.value(xi).transpose() * g);
  });
}

Var activation(Var x, Activation kind) {
  Tape& t = *x.tape();
  const auto a = x.value().array();
  int xi = x.id();
  switch (kind) {
    case Activation::elu: {
      Mat out = (a > 0.0).select(a, a.exp() - 1.0).matrix();
      return t.record(std::move(out), {x}, [xi](Tape& t, int self) {
        const auto v = t.value(xi).array();
        const auto y = t.value(self).array();
        t.accumulate(xi, (t.adjoint(self).array() * (v > 0.0).select(1.0, y + 1.0)).matrix());
      });
    }
    case Activation::softplus: {
      Mat out = (a.max(0.0) + (-a.abs()).exp().log1p()).matrix();
      return t.record(std::move(out), {x}, [xi](Tape& t, int self) {
        const auto v = t.value(xi).array();
        t.accumulate(xi, (t.adjoint(self).array() / (1.0 + (-v).exp())).matrix());
      });
    }
    case Activation::sigmoid: {
      Mat out = (a >= 0.0).select(1.0 / (1.0 + (-a).exp()), a.exp() / (1.0 + a.exp())).matrix();
      return t.record(std::move(out), {x}, [xi](Tape& t, int self) {
        const auto y = t.value(self).array();
        t.accumulate(xi, (t.adjoint(self).array() * y * (1.0 - y)).matrix());
      });
    }
    case Activation::relu_pos: {
      Mat out = a.max(0.0).matrix();
      return t.record(std::move(out), {x}, [xi](Tape& t, int self) {
        const auto v = t.value(xi).array();
        t.accumulate(xi, (v > 0.0).select(t.adjoint(self).array(), 0.0).matrix());
      });
    }
  }
  throw ConfigError("unknown activation kind");
}

Var softmax_with_reserve(Var x, bool include_constant) {
  if (x.cols() == 0) throw ShapeError("softmax_with_reserve: empty vector");
  Tape& t = *x.tape();
  const Mat& v = x.value();
  Eigen::VectorXd m = v.rowwise().maxCoeff();
  if (include_constant) m = m.cwiseMax(0.0);
  Mat e = (v.colwise() - m).array().exp().matrix();
  Eigen::VectorXd denom = e.rowwise().sum();
  if (include_constant) denom.array() += (-m.array()).exp();
  Mat out = e.array().colwise() / denom.array();
  int xi = x.id();
  return t.record(std::move(out), {x}, [xi](Tape& t, int self) {
    const Mat& y = t.value(self);
    const Mat& g = t.adjoint(self);
    Eigen::VectorXd dot = (g.array() * y.array()).rowwise().sum();
    t.accumulate(xi, (y.array() * (g.array().colwise() - dot.array())).matrix());
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  int ai = a.id(), bi = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ai, bi](Tape& t, int self) {
    t.accumulate(ai, t.adjoint(self));
    t.accumulate(bi, t.adjoint(self));
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  int ai = a.id(), bi = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ai, bi](Tape& t, int self) {
    t.accumulate(ai, t.adjoint(self));
    if (t.wants(bi)) t.accumulate(bi, -t.adjoint(self));
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  int ai = a.id(), bi = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [ai, bi](Tape& t, int self) {
                            const Mat& g = t.adjoint(self);
                            if (t.wants(ai)) t.accumulate(ai, g.cwiseProduct(t.value(bi)));
                            if (t.wants(bi)) t.accumulate(bi, g.cwiseProduct(t.value(ai)));
                          });
}

Var div(Var a, Var b) {
  require_same_shape("div", a, b);
  int ai = a.id(), bi = b.id();
  return a.tape()->record(a.value().cwiseQuotient(b.value()), {a, b},
                          [ai, bi](Tape& t, int self) {
                            const Mat& g = t.adjoint(self);
                            if (t.wants(ai)) t.accumulate(ai, g.cwiseQuotient(t.value(bi)));
                            if (t.wants(bi))
                              t.accumulate(bi, (-g.array() * t.value(self).array() /
                                                t.value(bi).array())
                                                   .matrix());
                          });
}

Var minimum(Var a, Var b) {
  require_same_shape("minimum", a, b);
  int ai = a.id(), bi = b.id();
  Mat out = a.value().cwiseMin(b.value());
  return a.tape()->record(std::move(out), {a, b}, [ai, bi](Tape& t, int self) {
    const auto g = t.adjoint(self).array();
    const auto take_a = t.value(ai).array() <= t.value(bi).array();
    if (t.wants(ai)) t.accumulate(ai, take_a.select(g, 0.0).matrix());
    if (t.wants(bi)) t.accumulate(bi, take_a.select(0.0, g).matrix());
  });
}

Var maximum(Var a, Var b) {
  require_same_shape("maximum", a, b);
  int ai = a.id(), bi = b.id();
  Mat out = a.value().cwiseMax(b.value());
  return a.tape()->record(std::move(out), {a, b}, [ai, bi](Tape& t, int self) {
    const auto g = t.adjoint(self).array();
    const auto take_a = t.value(ai).array() >= t.value(bi).array();
    if (t.wants(ai)) t.accumulate(ai, take_a.select(g, 0.0).matrix());
    if (t.wants(bi)) t.accumulate(bi, take_a.select(0.0, g).matrix());
  });
}

Var scale(Var x, double s) {
  int xi = x.id();
  return x.tape()->record(x.value() * s, {x}, [xi, s](Tape& t, int self) {
    t.accumulate(xi, t.adjoint(self) * s);
  });
}

Var shift(Var x, double s) {
  int xi = x.id();
  return x.tape()->record((x.value().array() + s).matrix(), {x},
                          [xi](Tape& t, int self) { t.accumulate(xi, t.adjoint(self)); });
}

Var exp(Var x) {
  int xi = x.id();
  return x.tape()->record(x.value().array().exp().matrix(), {x}, [xi](Tape& t, int self) {
    t.accumulate(xi, t.adjoint(self).cwiseProduct(t.value(self)));
  });
}

Var mul_col(Var x, Var c) {
  if (c.cols() != 1 || c.rows() != x.rows())
    throw ShapeError("mul_col: expected " + std::to_string(x.rows()) + "x1 multiplier, got " +
                     shape_str(c.value()));
  int xi = x.id(), ci = c.id();
  Mat out = x.value().array().colwise() * c.value().col(0).array();
  return x.tape()->record(std::move(out), {x, c}, [xi, ci](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    if (t.wants(xi))
      t.accumulate(xi, (g.array().colwise() * t.value(ci).col(0).array()).matrix());
    if (t.wants(ci)) t.accumulate(ci, g.cwiseProduct(t.value(xi)).rowwise().sum());
  });
}

Var repeat_cols(Var c, Eigen::Index k) {
  if (c.cols() != 1) throw ShapeError("repeat_cols: input must be a column");
  int ci = c.id();
  return c.tape()->record(c.value().replicate(1, k), {c}, [ci](Tape& t, int self) {
    t.accumulate(ci, t.adjoint(self).rowwise().sum());
  });
}

Var sum_cols(Var x) {
  int xi = x.id();
  return x.tape()->record(x.value().rowwise().sum(), {x}, [xi](Tape& t, int self) {
    t.accumulate(xi, t.adjoint(self).replicate(1, t.value(xi).cols()));
  });
}

Var sum_all(Var x) {
  int xi = x.id();
  Mat out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->record(std::move(out), {x}, [xi](Tape& t, int self) {
    const Mat& v = t.value(xi);
    t.accumulate(xi, Mat::Constant(v.rows(), v.cols(), t.adjoint(self)(0, 0)));
  });
}

Var mean_all(Var x) {
  if (x.value().size() == 0) throw ShapeError("mean_all: empty input");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size()));
}

Var col(Var x, Eigen::Index j) { return cols(x, j, 1); }

Var cols(Var x, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > x.cols())
    throw ShapeError("cols: range out of bounds for " + shape_str(x.value()));
  int xi = x.id();
  return x.tape()->record(x.value().middleCols(start, n), {x},
                          [xi, start, n](Tape& t, int self) {
                            const Mat& v = t.value(xi);
                            Mat g = Mat::Zero(v.rows(), v.cols());
                            g.middleCols(start, n) = t.adjoint(self);
                            t.accumulate(xi, g);
                          });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Eigen::Index rows = parts[0].rows(), total = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    total += p.cols();
  }
  Mat out(rows, total);
  std::vector<int> ids;
  std::vector<Eigen::Index> offs;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offs.push_back(off);
    off += p.cols();
  }
  return parts[0].tape()->record(std::move(out), parts, [ids, offs](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (t.wants(ids[i])) t.accumulate(ids[i], g.middleCols(offs[i], t.value(ids[i]).cols()));
  });
}

Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("vstack: no inputs");
  Eigen::Index c = parts[0].cols(), total = 0;
  for (const Var& p : parts) {
    if (p.cols() != c) throw ShapeError("vstack: column count mismatch");
    total += p.rows();
  }
  Mat out(total, c);
  std::vector<int> ids;
  std::vector<Eigen::Index> offs;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id());
    offs.push_back(off);
    off += p.rows();
  }
  return parts[0].tape()->record(std::move(out), parts, [ids, offs](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (t.wants(ids[i])) t.accumulate(ids[i], g.middleRows(offs[i], t.value(ids[i]).rows()));
  });
}

Var unstack_col(Var x, Eigen::Index k) {
  if (x.cols() != 1 || k <= 0 || x.rows() % k != 0)
    throw ShapeError("unstack_col: expected (k*rows)x1, got " + shape_str(x.value()));
  Eigen::Index rows = x.rows() / k;
  Mat out = Eigen::Map<const Mat>(x.value().data(), rows, k);
  int xi = x.id();
  return x.tape()->record(std::move(out), {x}, [xi](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    t.accumulate(xi, Eigen::Map<const Mat>(g.data(), g.size(), 1));
  });
}

Var stop_gradient(Var x) { return x.tape()->constant(x.value()); }

Var round_values(Var x) {
  return x.tape()->record(x.value().array().round().matrix(), {x}, [](Tape&, int) {});
}

}  // namespace hdlab
