#pragma once

// Minimal dense reverse-mode autodiff over row-major double matrices.
//
// A Tape records values in topological order. Each recorded op stores its
// input ids and a closure that scatters the node's gradient to its inputs.
// Nodes that do not depend on any gradient-requiring leaf carry no closure.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "bwb/error.hpp"

namespace bwb::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Tensor2 = Matrix;

inline std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

/// Handle to a node on a tape.
struct Var {
  std::uint32_t id = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t)>;

  Tape() { nodes_.reserve(256); }

  /// Owned leaf.
  Var leaf(Matrix value, bool requires_grad = false) {
    check_finite(value, "leaf");
    Node n;
    n.owned = std::move(value);
    n.needs_grad = requires_grad;
    n.op = "leaf";
    return push(std::move(n));
  }

  /// Leaf that references an external buffer, which must outlive the tape.
  Var external(const Matrix& value, bool requires_grad) {
    Node n;
    n.ext = &value;
    n.needs_grad = requires_grad;
    n.op = "param";
    return push(std::move(n));
  }

  /// Records an op result. `back` is dropped when no input needs a gradient.
  Var record(const char* op, Matrix value, std::initializer_list<Var> inputs, Backward back) {
    check_finite(value, op);
    Node n;
    n.owned = std::move(value);
    n.op = op;
    for (Var v : inputs) {
      n.inputs.push_back(v.id);
      n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
    }
    if (n.needs_grad) n.back = std::move(back);
    return push(std::move(n));
  }

  Var record(const char* op, Matrix value, const std::vector<Var>& inputs, Backward back) {
    check_finite(value, op);
    Node n;
    n.owned = std::move(value);
    n.op = op;
    for (Var v : inputs) {
      n.inputs.push_back(v.id);
      n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
    }
    if (n.needs_grad) n.back = std::move(back);
    return push(std::move(n));
  }

  const Matrix& value(Var v) const { return value(v.id); }
  const Matrix& value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.owned;
  }

  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  const char* op_name(Var v) const { return nodes_[v.id].op; }

  /// Gradient of the last backward() output w.r.t. v; zeros if v was unreached.
  Matrix grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0) {
      const Matrix& val = value(v);
      return Matrix::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  /// Accumulates into the gradient buffer of node `id` (used by op closures).
  template <class Expr>
  void accumulate(std::uint32_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  const Matrix& upstream(std::uint32_t id) const { return nodes_[id].grad; }

  /// Reverse sweep from a 1x1 output. Each node is visited once, in reverse
  /// recording order.
  void backward(Var out) {
    const Matrix& v = value(out);
    if (v.rows() != 1 || v.cols() != 1) {
      throw ArgumentError("backward: output must be scalar, got " + shape_str(v));
    }
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[out.id].needs_grad) return;
    nodes_[out.id].grad = Matrix::Ones(1, 1);
    for (std::int64_t i = out.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back && n.grad.size() != 0) n.back(*this, static_cast<std::uint32_t>(i));
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* ext = nullptr;
    Matrix grad;
    std::vector<std::uint32_t> inputs;
    Backward back;
    const char* op = "";
    bool needs_grad = false;
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  static void check_finite(const Matrix& m, const char* op) {
    if (!m.allFinite()) {
      throw NumericalError(std::string("non-finite value produced by op '") + op + "'");
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace bwb::nn
