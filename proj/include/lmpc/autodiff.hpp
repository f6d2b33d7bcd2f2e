// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lmpc/tensor.hpp"

namespace lmpc::ad {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Record of primitive operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so index order is a topological
/// order and the backward sweep walks indices downwards. A tape is used by
/// one thread at a time.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf that receives a gradient.
  Var variable(Tensor value);
  /// One variable per entry of `params`, in order.
  std::vector<Var> watch(const ParameterSet& params);

  /// Appends the result of primitive `op`. Throws NumericError if `value`
  /// is not finite.
  Var record(const char* op, Tensor value, std::vector<std::size_t> parents, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Adjoint buffer of node `id`, allocated on first use.
  Tensor& grad(std::size_t id);
  std::size_t size() const { return nodes_.size(); }

  /// Gradients of scalar `loss` with respect to `wrt`. Variables that do not
  /// influence the loss receive zero tensors. Throws ShapeError when `loss` is
  /// not a single-element tensor. Can be called more than once.
  std::vector<Tensor> gradient(Var loss, std::span<const Var> wrt);

  /// Number of nodes whose backward function ran during the last sweep.
  std::size_t last_backward_visits() const { return last_visits_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
  std::size_t last_visits_ = 0;
};

// Elementwise binary operations broadcast when one operand's shape is a
// suffix of the other's (a row vector over a batch, or a scalar).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

/// [rows, n] x [n, m] -> [rows, m].
Var matmul(Var a, Var b);

Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var square(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
/// max(a, c) with a constant floor; gradient passes only where a > c.
Var maximum(Var a, double c);

/// Sum of all elements -> scalar.
Var sum(Var a);
Var mean(Var a);
/// Sum over the last axis: [..., n] -> [...].
Var sum_last(Var a);

/// Concatenation along the last axis. All leading dimensions must agree.
Var concat(std::span<const Var> parts);
Var concat(Var a, Var b);
/// Columns [begin, end) of the last axis.
Var slice_last(Var a, std::size_t begin, std::size_t end);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }

/// Numerically stable log(1 + exp(x)).
double softplus(double x);
double sigmoid(double x);

}  // namespace lmpc::ad
