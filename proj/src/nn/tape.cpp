#include "latentadv/nn/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace latentadv::nn {
namespace {

Matrix sigmoid_of(const Matrix& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Matrix xavier(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
  }
  return m;
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

const Matrix& Tape::grad(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.grad.size() == 0 ? empty_ : n.grad;
}

Var Tape::push(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Var Tape::constant(Matrix value) { return push(std::move(value), false); }

Var Tape::variable(Matrix value) { return push(std::move(value), true); }

Var Tape::parameter(const Parameter& param) {
  Node n;
  n.external = &param.value;
  n.requires_grad = track_parameters_;
  // Only training tapes write gradients back; the owner of a training tape
  // holds the parameters mutably.
  if (track_parameters_) n.param = const_cast<Parameter*>(&param);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  Var out = push(a.value() * b.value(), needs(a) || needs(b));
  if (node(out).requires_grad) {
    node(out).backward = [a, b](Tape& t, const Node& self) {
      if (t.needs(a)) t.accumulate(a, self.grad * b.value().transpose());
      if (t.needs(b)) t.accumulate(b, a.value().transpose() * self.grad);
    };
  }
  return out;
}

Var Tape::add(Var a, Var b) {
  Var out = push(a.value() + b.value(), needs(a) || needs(b));
  if (node(out).requires_grad) {
    node(out).backward = [a, b](Tape& t, const Node& self) {
      t.accumulate(a, self.grad);
      t.accumulate(b, self.grad);
    };
  }
  return out;
}

Var Tape::sub(Var a, Var b) {
  Var out = push(a.value() - b.value(), needs(a) || needs(b));
  if (node(out).requires_grad) {
    node(out).backward = [a, b](Tape& t, const Node& self) {
      t.accumulate(a, self.grad);
      if (t.needs(b)) t.accumulate(b, -self.grad);
    };
  }
  return out;
}

Var Tape::mul(Var a, Var b) {
  Var out = push(a.value().cwiseProduct(b.value()), needs(a) || needs(b));
  if (node(out).requires_grad) {
    node(out).backward = [a, b](Tape& t, const Node& self) {
      if (t.needs(a)) t.accumulate(a, self.grad.cwiseProduct(b.value()));
      if (t.needs(b)) t.accumulate(b, self.grad.cwiseProduct(a.value()));
    };
  }
  return out;
}

Var Tape::add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Matrix v = a.value().rowwise() + row.value().row(0);
  Var out = push(std::move(v), needs(a) || needs(row));
  if (node(out).requires_grad) {
    node(out).backward = [a, row](Tape& t, const Node& self) {
      t.accumulate(a, self.grad);
      if (t.needs(row)) t.accumulate(row, self.grad.colwise().sum());
    };
  }
  return out;
}

Var Tape::mul_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("mul_col: shape mismatch");
  Matrix v = a.value().array().colwise() * col.value().col(0).array();
  Var out = push(std::move(v), needs(a) || needs(col));
  if (node(out).requires_grad) {
    node(out).backward = [a, col](Tape& t, const Node& self) {
      if (t.needs(a)) {
        Matrix ga = self.grad.array().colwise() * col.value().col(0).array();
        t.accumulate(a, ga);
      }
      if (t.needs(col)) {
        t.accumulate(col, self.grad.cwiseProduct(a.value()).rowwise().sum());
      }
    };
  }
  return out;
}

Var Tape::affine(Var a, double scale, double shift) {
  Matrix v = (a.value().array() * scale + shift).matrix();
  Var out = push(std::move(v), needs(a));
  if (node(out).requires_grad) {
    node(out).backward = [a, scale](Tape& t, const Node& self) { t.accumulate(a, self.grad * scale); };
  }
  return out;
}

Var Tape::sigmoid(Var a) {
  Var out = push(sigmoid_of(a.value()), needs(a));
  if (node(out).requires_grad) {
    node(out).backward = [a, out](Tape& t, const Node& self) {
      const Matrix& y = out.value();
      t.accumulate(a, self.grad.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
    };
  }
  return out;
}

Var Tape::tanh(Var a) {
  Var out = push(a.value().array().tanh().matrix(), needs(a));
  if (node(out).requires_grad) {
    node(out).backward = [a, out](Tape& t, const Node& self) {
      const Matrix& y = out.value();
      t.accumulate(a, self.grad.cwiseProduct((1.0 - y.array().square()).matrix()));
    };
  }
  return out;
}

Var Tape::exp(Var a) {
  Var out = push(a.value().array().exp().matrix(), needs(a));
  if (node(out).requires_grad) {
    node(out).backward = [a, out](Tape& t, const Node& self) {
      t.accumulate(a, self.grad.cwiseProduct(out.value()));
    };
  }
  return out;
}

Var Tape::square(Var a) {
  Var out = push(a.value().array().square().matrix(), needs(a));
  if (node(out).requires_grad) {
    node(out).backward = [a](Tape& t, const Node& self) {
      t.accumulate(a, 2.0 * self.grad.cwiseProduct(a.value()));
    };
  }
  return out;
}

Var Tape::softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  Var out = push(std::move(y), needs(a));
  if (node(out).requires_grad) {
    node(out).backward = [a, out](Tape& t, const Node& self) {
      const Matrix& s = out.value();
      Eigen::VectorXd dots = self.grad.cwiseProduct(s).rowwise().sum();
      Matrix g = s.cwiseProduct((self.grad.colwise() - dots));
      t.accumulate(a, g);
    };
  }
  return out;
}

Var Tape::log_softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    y.row(i) = (x.row(i).array() - lse).matrix();
  }
  Var out = push(std::move(y), needs(a));
  if (node(out).requires_grad) {
    node(out).backward = [a, out](Tape& t, const Node& self) {
      Matrix s = out.value().array().exp().matrix();
      Eigen::VectorXd total = self.grad.rowwise().sum();
      Matrix g = self.grad - (s.array().colwise() * total.array()).matrix();
      t.accumulate(a, g);
    };
  }
  return out;
}

Var Tape::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  Var out = push(a.value().middleCols(start, count), needs(a));
  if (node(out).requires_grad) {
    node(out).backward = [a, start, count](Tape& t, const Node& self) {
      Matrix g = Matrix::Zero(a.rows(), a.cols());
      g.middleCols(start, count) = self.grad;
      t.accumulate(a, g);
    };
  }
  return out;
}

Var Tape::concat_cols(Var a, Var b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  Var out = push(std::move(v), needs(a) || needs(b));
  if (node(out).requires_grad) {
    node(out).backward = [a, b](Tape& t, const Node& self) {
      if (t.needs(a)) t.accumulate(a, self.grad.leftCols(a.cols()));
      if (t.needs(b)) t.accumulate(b, self.grad.rightCols(b.cols()));
    };
  }
  return out;
}

Var Tape::sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  Var out = push(std::move(v), needs(a));
  if (node(out).requires_grad) {
    node(out).backward = [a](Tape& t, const Node& self) {
      t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), self.grad(0, 0)));
    };
  }
  return out;
}

Var Tape::softplus(Var a) {
  Matrix v = a.value().unaryExpr([](double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  Var out = push(std::move(v), needs(a));
  if (node(out).requires_grad) {
    node(out).backward = [a](Tape& t, const Node& self) {
      t.accumulate(a, self.grad.cwiseProduct(sigmoid_of(a.value())));
    };
  }
  return out;
}

void Tape::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) throw std::invalid_argument("backward: root must be 1x1");
  if (!needs(root)) return;
  node(root).grad = Matrix::Ones(1, 1);
  for (int i = root.id_; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, n);
    }
  }
}

Linear::Linear(int in, int out, Rng& rng)
    : weight(xavier(in, out, rng)), bias(Matrix::Zero(1, out)) {}

Var Linear::forward(Tape& tape, Var x) const {
  return tape.add_row(tape.matmul(x, tape.parameter(weight)), tape.parameter(bias));
}

LstmCell::LstmCell(int in, int hidden_size, Rng& rng)
    : input_weight(xavier(in, 4 * hidden_size, rng)),
      hidden_weight(xavier(hidden_size, 4 * hidden_size, rng)),
      bias(Matrix::Zero(1, 4 * hidden_size)),
      hidden(hidden_size) {
  // Forget-gate bias starts at 1.
  bias.value.middleCols(hidden_size, hidden_size).setOnes();
}

LstmCell::State LstmCell::step(Tape& tape, Var x, State state) const {
  Var gates = tape.add_row(
      tape.add(tape.matmul(x, tape.parameter(input_weight)),
               tape.matmul(state.h, tape.parameter(hidden_weight))),
      tape.parameter(bias));
  Var i = tape.sigmoid(tape.slice_cols(gates, 0, hidden));
  Var f = tape.sigmoid(tape.slice_cols(gates, hidden, hidden));
  Var g = tape.tanh(tape.slice_cols(gates, 2 * hidden, hidden));
  Var o = tape.sigmoid(tape.slice_cols(gates, 3 * hidden, hidden));
  Var c = tape.add(tape.mul(f, state.c), tape.mul(i, g));
  Var h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  ++step_count_;
  double scale = 1.0;
  if (options_.clip_norm > 0) {
    double norm_sq = 0.0;
    for (auto* p : params_) norm_sq += p->grad.squaredNorm();
    const double norm = std::sqrt(norm_sq);
    if (norm > options_.clip_norm) scale = options_.clip_norm / norm;
  }
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (auto* p : params_) {
    Matrix g = p->grad * scale;
    p->adam_m = b1 * p->adam_m + (1.0 - b1) * g;
    p->adam_v = b2 * p->adam_v + (1.0 - b2) * g.cwiseProduct(g);
    p->value.array() -= options_.learning_rate * (p->adam_m.array() / correction1) /
                        ((p->adam_v.array() / correction2).sqrt() + options_.epsilon);
  }
}

}  // namespace latentadv::nn
