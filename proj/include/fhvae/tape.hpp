#pragma once

#include <functional>
#include <vector>

#include "fhvae/tensor.hpp"

namespace fhvae {

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Records forward operations in topological order and replays them backward.
// A tape owns the values and gradients of all nodes it created; Var handles
// are only meaningful on the tape that issued them. Single-threaded per tape;
// distinct tapes are independent.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false);

  // C[m,n] = A[m,k] * B[k,n]
  Var matmul(Var a, Var b);

  // Elementwise on equal shapes.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);

  Var exp(Var a);
  Var log(Var a);  // domain error on non-positive input
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);

  // Repeat a rank-1 vector of length n as m rows -> (m, n).
  Var broadcast_rows(Var v, std::size_t m);

  // Concatenate along the last axis. Rank-1 inputs give a longer vector;
  // rank-2 inputs must agree on the row count.
  Var concat_cols(const std::vector<Var>& parts);

  // [lo, hi) along the last axis.
  Var slice_cols(Var a, std::size_t lo, std::size_t hi);
  // [lo, hi) along the first axis; rank-2 only.
  Var slice_rows(Var a, std::size_t lo, std::size_t hi);

  // Stack rank-1 vectors of equal length as rows -> (count, n).
  Var stack_rows(const std::vector<Var>& rows);

  Var reshape(Var a, Shape shape);

  // Reductions over the given axes (rank <= 2). Reducing every axis yields a
  // rank-0 scalar.
  Var reduce_sum(Var a, const std::vector<int>& axes);
  Var reduce_mean(Var a, const std::vector<int>& axes);
  Var sum_all(Var a);

  // Accumulates d(loss)/d(node) for every node reachable from the scalar
  // loss; leaves not reachable keep a zero gradient.
  void backward(Var loss);

  const Tensor& value(Var v) const { return node(v).value; }
  double scalar_value(Var v) const { return node(v).value.item(); }
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    std::function<void(Tape&, int)> backprop;
    bool requires_grad = false;
  };

  Var push(Tensor value, std::vector<int> inputs,
           std::function<void(Tape&, int)> backprop);
  Node& node(Var v);
  const Node& node(Var v) const;
  Tensor& grad_buf(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Tensor& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// Builds a scalar loss on the given tape from the leaf holding x.
using ScalarGraphFn = std::function<Var(Tape&, Var)>;

// Compares the tape gradient of f at x against central finite differences
// with step h. Returns the maximum over coordinates of
// |analytic - central| / max(1e-8, |analytic| + |central|).
double finite_diff_check(const ScalarGraphFn& f, const Tensor& x, double h);

}  // namespace fhvae
