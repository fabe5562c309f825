#pragma once

// Reverse-mode automatic differentiation over dense f64 matrices.
//
// Values are Eigen matrices laid out with one scenario per row, so a single
// tape differentiates a whole shard of scenarios at once. The tape is rebuilt
// for every rollout.

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

#include "hdlab/error.hpp"

namespace hdlab {

using Mat = Eigen::MatrixXd;

class ParamSet {
 public:
  int add(const std::string& name, Mat init);

  int size() const { return static_cast<int>(entries_.size()); }
  int find(const std::string& name) const;
  const std::string& name(int i) const { return entries_.at(i).name; }
  const Mat& value(int i) const { return entries_.at(i).value; }
  Mat& value(int i) { return entries_.at(i).value; }
  const Mat& at(const std::string& name) const;

  Mat& first_moment(int i) { return entries_.at(i).m; }
  Mat& second_moment(int i) { return entries_.at(i).v; }
  long& adam_steps() { return adam_steps_; }
  long adam_steps() const { return adam_steps_; }

  std::size_t scalar_count() const;
  std::vector<Mat> zeros_like() const;
  void reset_moments();

 private:
  struct Entry {
    std::string name;
    Mat value, m, v;
  };
  std::vector<Entry> entries_;
  long adam_steps_ = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_update(ParamSet& params, const std::vector<Mat>& grads, const AdamConfig& cfg);

class Tape;

class Var {
 public:
  Var() = default;
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Var constant(Mat value);
  // Differentiable input whose gradient can be read after backward().
  Var leaf(Mat value);
  // One leaf per parameter, in ParamSet order.
  std::vector<Var> bind(const ParamSet& params);
  // Records a node; `back` is dropped when no parent carries a gradient.
  Var record(Mat value, std::initializer_list<Var> parents, Backward back);
  Var record(Mat value, const std::vector<Var>& parents, Backward back);

  void backward(Var root);
  // Zero matrix of the right shape when the node received no adjoint.
  Mat grad(Var v) const;
  std::vector<Mat> param_grads(const ParamSet& params) const;

  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  const Mat& value(int id) const { return nodes_[id].value; }
  const Mat& adjoint(int id) const { return nodes_[id].grad; }
  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }
  bool wants(int id) const { return nodes_[id].requires_grad; }

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward back;
    bool requires_grad = false;
    int param = -1;
  };
  Var push(Node n);
  void check_same_tape(Var v) const;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
};

enum class Activation { elu, softplus, sigmoid, relu_pos };

Activation activation_from_string(const std::string& s);

// Dense layer: value = x W + b, with b a 1 x m row broadcast over rows.
Var affine(Var x, Var W, Var b);
Var matmul(Var x, Var W);
Var activation(Var x, Activation kind);
inline Var elu(Var x) { return activation(x, Activation::elu); }
inline Var softplus(Var x) { return activation(x, Activation::softplus); }
inline Var sigmoid(Var x) { return activation(x, Activation::sigmoid); }
inline Var relu(Var x) { return activation(x, Activation::relu_pos); }

// Row-wise exp(x_k) / (c + sum_j exp(x_j)), c = 1 with the constant, else 0.
Var softmax_with_reserve(Var x, bool include_constant);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var scale(Var x, double s);
Var shift(Var x, double s);
Var exp(Var x);

// x is rows x k, c is rows x 1: every column multiplied by c.
Var mul_col(Var x, Var c);
Var repeat_cols(Var c, Eigen::Index k);
Var sum_cols(Var x);
Var sum_all(Var x);
Var mean_all(Var x);
Var col(Var x, Eigen::Index j);
Var cols(Var x, Eigen::Index start, Eigen::Index n);
Var concat_cols(const std::vector<Var>& parts);
Var vstack(const std::vector<Var>& parts);
// (k * rows) x 1 with block j holding column j  ->  rows x k.
Var unstack_col(Var x, Eigen::Index k);
Var stop_gradient(Var x);
// Nearest-integer rounding with a zero derivative; evaluation only.
Var round_values(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator*(double s, Var x) { return scale(x, s); }
inline Var operator*(Var x, double s) { return scale(x, s); }
inline Var operator+(Var x, double s) { return shift(x, s); }
inline Var operator-(Var x, double s) { return shift(x, -s); }

}  // namespace hdlab
