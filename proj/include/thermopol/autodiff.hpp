#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records a loss as a DAG of matrix primitives, evaluated eagerly on
// construction. `backward` seeds a 1x1 root with 1 and accumulates adjoints
// into every parameter leaf. Only the primitives below carry derivative
// rules; a reverse pass that reaches any other recorded primitive throws
// UnsupportedPrimitive.

#include <Eigen/Core>
#include <string>
#include <vector>

#include "thermopol/errors.hpp"

namespace thermopol {

template <typename Scalar>
class Tape {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  enum class Op {
    kConstant,
    kParameter,
    kMatMul,    // a * b
    kAddBias,   // a + b broadcast over columns (b is rows x 1)
    kAdd,
    kSub,
    kMul,       // elementwise
    kDiv,       // elementwise
    kScale,     // k * a
    kAddScalar, // a + k
    kSoftplus,  // log(1 + exp(k a)) / k
    kSigmoid,   // 1 / (1 + exp(-k a))
    kSin,
    kCos,
    kLog,
    kSqrt,
    kSquare,
    kMin,        // elementwise min(a, b)
    kConcatRows, // [a; b]
    kSum,        // 1x1 total
    kColSum,     // 1 x cols, summing rows
    kFloor,      // forward only
  };

  struct Var {
    int id = -1;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // -- leaves ---------------------------------------------------------------

  Var constant(Matrix value) { return push(Op::kConstant, -1, -1, std::move(value)); }

  Var constant_scalar(Scalar v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  /// Leaf bound to parameter slot `slot`; its gradient is read back with
  /// `parameter_gradient(slot)` after `backward`.
  Var parameter(int slot, Matrix value) {
    Var v = push(Op::kParameter, -1, -1, std::move(value));
    nodes_[v.id].slot = slot;
    return v;
  }

  // -- primitives -----------------------------------------------------------

  Var matmul(Var a, Var b) { return push(Op::kMatMul, a.id, b.id, value(a) * value(b)); }

  Var add_bias(Var a, Var bias) {
    require_cols(bias, 1, "add_bias");
    return push(Op::kAddBias, a.id, bias.id, value(a).colwise() + value(bias).col(0));
  }

  Var add(Var a, Var b) { same_shape(a, b, "add"); return push(Op::kAdd, a.id, b.id, value(a) + value(b)); }
  Var sub(Var a, Var b) { same_shape(a, b, "sub"); return push(Op::kSub, a.id, b.id, value(a) - value(b)); }
  Var mul(Var a, Var b) {
    same_shape(a, b, "mul");
    return push(Op::kMul, a.id, b.id, value(a).cwiseProduct(value(b)));
  }
  Var div(Var a, Var b) {
    same_shape(a, b, "div");
    return push(Op::kDiv, a.id, b.id, value(a).cwiseQuotient(value(b)));
  }
  Var scale(Var a, Scalar k) { return push(Op::kScale, a.id, -1, value(a) * k, k); }
  Var add_scalar(Var a, Scalar k) {
    return push(Op::kAddScalar, a.id, -1, (value(a).array() + k).matrix(), k);
  }
  Var softplus(Var a, Scalar beta = Scalar(1)) {
    return push(Op::kSoftplus, a.id, -1, softplus_value(value(a), beta), beta);
  }
  Var sigmoid(Var a, Scalar k = Scalar(1)) {
    return push(Op::kSigmoid, a.id, -1, sigmoid_value(value(a), k), k);
  }
  Var sin(Var a) { return push(Op::kSin, a.id, -1, value(a).array().sin().matrix()); }
  Var cos(Var a) { return push(Op::kCos, a.id, -1, value(a).array().cos().matrix()); }
  Var log(Var a) { return push(Op::kLog, a.id, -1, value(a).array().log().matrix()); }
  Var sqrt(Var a) { return push(Op::kSqrt, a.id, -1, value(a).array().sqrt().matrix()); }
  Var square(Var a) { return push(Op::kSquare, a.id, -1, value(a).array().square().matrix()); }
  Var min(Var a, Var b) {
    same_shape(a, b, "min");
    return push(Op::kMin, a.id, b.id, value(a).cwiseMin(value(b)));
  }
  Var concat_rows(Var a, Var b) {
    if (value(a).cols() != value(b).cols()) throw ShapeMismatch("concat_rows: column mismatch");
    Matrix out(value(a).rows() + value(b).rows(), value(a).cols());
    out << value(a), value(b);
    return push(Op::kConcatRows, a.id, b.id, std::move(out));
  }
  Var sum(Var a) {
    Matrix out(1, 1);
    out(0, 0) = value(a).sum();
    return push(Op::kSum, a.id, -1, std::move(out));
  }
  Var col_sum(Var a) { return push(Op::kColSum, a.id, -1, value(a).colwise().sum()); }
  Var floor(Var a) { return push(Op::kFloor, a.id, -1, value(a).array().floor().matrix()); }

  // -- composites -----------------------------------------------------------

  Var mean(Var a) { return scale(sum(a), Scalar(1) / static_cast<Scalar>(value(a).size())); }

  /// Column-wise Euclidean norm with sqrt(|x|^2 + eps) smoothing.
  Var col_norm(Var a, Scalar eps = Scalar(0)) {
    Var sq = col_sum(square(a));
    return sqrt(eps > 0 ? add_scalar(sq, eps) : sq);
  }

  /// Column-wise dot product of two equally shaped matrices.
  Var col_dot(Var a, Var b) { return col_sum(mul(a, b)); }

  // -- access ---------------------------------------------------------------

  const Matrix& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  Scalar scalar(Var v) const { return value(v)(0, 0); }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse pass from a 1x1 root.
  void backward(Var root) {
    if (value(root).rows() != 1 || value(root).cols() != 1) {
      throw ShapeMismatch("backward requires a scalar root");
    }
    adjoint_.assign(nodes_.size(), Matrix());
    adjoint_[root.id] = Matrix::Ones(1, 1);
    for (int id = root.id; id >= 0; --id) {
      if (adjoint_[id].size() == 0 || !nodes_[id].needs_grad) continue;
      propagate(id);
    }
  }

  /// Gradient accumulated into parameter slot; empty matrix if unreached.
  Matrix parameter_gradient(int slot) const {
    Matrix g;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      const Node& n = nodes_[id];
      if (n.op != Op::kParameter || n.slot != slot || id >= adjoint_.size()) continue;
      if (adjoint_[id].size() == 0) continue;
      if (g.size() == 0) {
        g = adjoint_[id];
      } else {
        g += adjoint_[id];
      }
    }
    return g;
  }

  /// Adjoint of any node after `backward` (empty when unreached).
  const Matrix& adjoint(Var v) const { return adjoint_.at(static_cast<std::size_t>(v.id)); }

  static Matrix softplus_value(const Matrix& x, Scalar beta) {
    // relu(x) + log(1 + exp(-beta |x|)) / beta: overflow-free, and built from
    // exp and log only so it vectorizes.
    const auto bx = (x.array() * beta).eval();
    return (bx.max(Scalar(0)) + ((-bx.abs()).exp() + Scalar(1)).log()).matrix() / beta;
  }

  static Matrix sigmoid_value(const Matrix& x, Scalar k) {
    return ((-(x.array() * k)).exp() + Scalar(1)).inverse().matrix();
  }

 private:
  struct Node {
    Op op;
    int a;
    int b;
    Matrix value;
    Scalar k = Scalar(0);
    int slot = -1;
    bool needs_grad = false;
  };

  bool wants(int id) const { return id >= 0 && nodes_[id].needs_grad; }

  Var push(Op op, int a, int b, Matrix value, Scalar k = Scalar(0)) {
    const bool needs = op == Op::kParameter || wants(a) || wants(b);
    nodes_.push_back(Node{op, a, b, std::move(value), k, -1, needs});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void same_shape(Var a, Var b, const char* what) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
      throw ShapeMismatch(std::string(what) + ": operand shapes differ");
    }
  }

  void require_cols(Var v, Eigen::Index cols, const char* what) const {
    if (value(v).cols() != cols) throw ShapeMismatch(std::string(what) + ": bad column count");
  }

  void accumulate(int id, const Matrix& g) {
    if (adjoint_[id].size() == 0) {
      adjoint_[id] = g;
    } else {
      adjoint_[id] += g;
    }
  }

  void propagate(int id) {
    const Node& n = nodes_[id];
    const Matrix& g = adjoint_[id];
    switch (n.op) {
      case Op::kConstant:
      case Op::kParameter:
        return;
      case Op::kMatMul:
        if (wants(n.a)) accumulate(n.a, g * nodes_[n.b].value.transpose());
        if (wants(n.b)) accumulate(n.b, nodes_[n.a].value.transpose() * g);
        return;
      case Op::kAddBias:
        if (wants(n.a)) accumulate(n.a, g);
        if (wants(n.b)) accumulate(n.b, g.rowwise().sum());
        return;
      case Op::kAdd:
        if (wants(n.a)) accumulate(n.a, g);
        if (wants(n.b)) accumulate(n.b, g);
        return;
      case Op::kSub:
        if (wants(n.a)) accumulate(n.a, g);
        if (wants(n.b)) accumulate(n.b, -g);
        return;
      case Op::kMul:
        if (wants(n.a)) accumulate(n.a, g.cwiseProduct(nodes_[n.b].value));
        if (wants(n.b)) accumulate(n.b, g.cwiseProduct(nodes_[n.a].value));
        return;
      case Op::kDiv: {
        const Matrix& bv = nodes_[n.b].value;
        if (wants(n.a)) accumulate(n.a, g.cwiseQuotient(bv));
        if (wants(n.b)) accumulate(n.b, -g.cwiseProduct(n.value).cwiseQuotient(bv));
        return;
      }
      case Op::kScale:
        if (wants(n.a)) accumulate(n.a, g * n.k);
        return;
      case Op::kAddScalar:
        if (wants(n.a)) accumulate(n.a, g);
        return;
      case Op::kSoftplus:
        if (wants(n.a)) accumulate(n.a, g.cwiseProduct(sigmoid_value(nodes_[n.a].value, n.k)));
        return;
      case Op::kSigmoid: {
        const auto y = n.value.array();
        if (wants(n.a)) accumulate(n.a, (g.array() * y * (Scalar(1) - y) * n.k).matrix());
        return;
      }
      case Op::kSin:
        if (wants(n.a)) accumulate(n.a, g.cwiseProduct(nodes_[n.a].value.array().cos().matrix()));
        return;
      case Op::kCos:
        if (wants(n.a)) accumulate(n.a, -g.cwiseProduct(nodes_[n.a].value.array().sin().matrix()));
        return;
      case Op::kLog:
        if (wants(n.a)) accumulate(n.a, g.cwiseQuotient(nodes_[n.a].value));
        return;
      case Op::kSqrt:
        if (wants(n.a)) accumulate(n.a, (g.array() / (Scalar(2) * n.value.array())).matrix());
        return;
      case Op::kSquare:
        if (wants(n.a)) accumulate(n.a, (g.array() * Scalar(2) * nodes_[n.a].value.array()).matrix());
        return;
      case Op::kMin: {
        const auto take_a = (nodes_[n.a].value.array() <= nodes_[n.b].value.array());
        if (wants(n.a)) accumulate(n.a, take_a.select(g.array(), Scalar(0)).matrix());
        if (wants(n.b)) accumulate(n.b, take_a.select(Scalar(0), g.array()).matrix());
        return;
      }
      case Op::kConcatRows: {
        const Eigen::Index ra = nodes_[n.a].value.rows();
        if (wants(n.a)) accumulate(n.a, g.topRows(ra));
        if (wants(n.b)) accumulate(n.b, g.bottomRows(g.rows() - ra));
        return;
      }
      case Op::kSum:
        if (wants(n.a)) accumulate(n.a, Matrix::Constant(nodes_[n.a].value.rows(), nodes_[n.a].value.cols(),
                                         g(0, 0)));
        return;
      case Op::kColSum:
        if (wants(n.a)) accumulate(n.a, g.replicate(nodes_[n.a].value.rows(), 1));
        return;
      case Op::kFloor:
        break;
    }
    throw UnsupportedPrimitive("no derivative rule for recorded primitive");
  }

  std::vector<Node> nodes_;
  std::vector<Matrix> adjoint_;
};

}  // namespace thermopol
