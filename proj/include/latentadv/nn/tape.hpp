#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "latentadv/rng.hpp"

namespace latentadv::nn {

using Matrix = Eigen::MatrixXd;

// Trainable tensor with its accumulated gradient and Adam moments.
struct Parameter {
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;

  Parameter() = default;
  explicit Parameter(Matrix init)
      : value(std::move(init)),
        grad(Matrix::Zero(value.rows(), value.cols())),
        adam_m(Matrix::Zero(value.rows(), value.cols())),
        adam_v(Matrix::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(); }
};

class Tape;

// Handle to a node on a tape. Values are matrices with the batch along rows.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode automatic differentiation over dense matrices. A tape records
// one forward pass; backward() propagates from a scalar node and accumulates
// into parameter gradients.
class Tape {
 public:
  // With track_parameters, parameter leaves require gradients and backward()
  // accumulates into Parameter::grad. Otherwise parameters are read-only
  // constants, so shared trained models are never written to.
  explicit Tape(bool track_parameters = false) : track_parameters_(track_parameters) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Leaf whose gradient is kept on the tape (read it with Var::grad()).
  Var variable(Matrix value);
  // Leaf bound to a parameter (no copy of its value).
  Var parameter(const Parameter& param);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  // a (n x m) plus a row vector (1 x m) broadcast over rows.
  Var add_row(Var a, Var row);
  // a (n x m) scaled row-wise by a column (n x 1).
  Var mul_col(Var a, Var col);
  // scale * a + shift, element-wise.
  Var affine(Var a, double scale, double shift);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var square(Var a);
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
  Var concat_cols(Var a, Var b);
  Var sum(Var a);
  // Element-wise log(1 + exp(a)), numerically stable.
  Var softplus(Var a);

  // Seeds d(root)/d(root) = 1 for a 1x1 root and runs the reverse sweep.
  void backward(Var root);

  const Matrix& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external != nullptr ? *n.external : n.value;
  }
  const Matrix& grad(int id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;  // unused for parameter leaves, which read *external
    Matrix grad;
    bool requires_grad = false;
    const Matrix* external = nullptr;
    Parameter* param = nullptr;
    std::function<void(Tape&, const Node&)> backward;
  };

  Var push(Matrix value, bool requires_grad);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].requires_grad; }
  void accumulate(Var v, const Matrix& g);
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id_)]; }

  std::vector<Node> nodes_;
  Matrix empty_;
  bool track_parameters_ = false;
};

// Fully connected layer y = x W + b.
struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Linear() = default;
  Linear(int in, int out, Rng& rng);
  Var forward(Tape& tape, Var x) const;
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

// Single LSTM cell with gates ordered (input, forget, cell, output).
struct LstmCell {
  Parameter input_weight;   // in x 4h
  Parameter hidden_weight;  // h x 4h
  Parameter bias;           // 1 x 4h
  int hidden = 0;

  LstmCell() = default;
  LstmCell(int in, int hidden, Rng& rng);

  struct State {
    Var h;
    Var c;
  };
  State step(Tape& tape, Var x, State state) const;
  std::vector<Parameter*> parameters() { return {&input_weight, &hidden_weight, &bias}; }
};

struct AdamOptions {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global gradient-norm clip, <= 0 disables
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options);
  void zero_grad();
  void step();

 private:
  std::vector<Parameter*> params_;
  AdamOptions options_;
  long step_count_ = 0;
};

}  // namespace latentadv::nn
