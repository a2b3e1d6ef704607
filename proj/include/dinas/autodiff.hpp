// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dinas/types.hpp"

// Minimal reverse-mode differentiation over dense row-major matrices. A Tape
// records each operation with a closure that pushes the output gradient to
// its inputs; backward() replays the closures in reverse order.
namespace dinas::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

  bool recording() const { return record_; }

  Var constant(Matrix value);
  /// Leaf that reads `value` in place; its gradient is available after backward().
  Var parameter(const Matrix& value);

  const Matrix& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.ref ? *n.ref : n.value;
  }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  /// Gradient of the last backward() target; zero if `v` did not influence it.
  Matrix grad(Var v) const;
  bool has_grad(Var v) const { return nodes_[v.id].has_grad; }

  /// Back-propagates from a 1x1 output.
  void backward(Var out);

  // Used by operations.
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;
  Var push(Matrix value, bool needs_grad, Backward back);
  void accumulate(Var v, const Matrix& g);
  template <typename Fn>
  void accumulate_with(Var v, Fn&& fn) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (!n.has_grad) {
      const Matrix& val = n.ref ? *n.ref : n.value;
      n.grad.setZero(val.rows(), val.cols());
      n.has_grad = true;
    }
    fn(n.grad);
  }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool has_grad = false;
    bool needs_grad = false;
    Backward back;
  };
  bool record_;
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// Adds a 1 x c row to every row of `a`.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
/// Elementwise product with a constant matrix (dropout masks).
Var mul_const(Var a, const Matrix& mask);
Var silu(Var a);
/// Row-wise layer normalization with 1 x c gain and offset.
Var layer_norm(Var a, Var gain, Var offset, double eps = 1e-5);
/// Row `index` of `table` as a 1 x c matrix.
Var gather_row(Var table, int index);
/// For n x d inputs q and k, the (n*n) x d tensor y[(i,j), c] = s * q[i,c] * k[j,c].
Var pair_products(Var q, Var k, double s);
/// (R x d) -> (R x heads): sums the d/heads channels of each head.
Var head_sum(Var y, int heads);
/// Attention over j with logits scores[(i,j), h]; returns n x d with head h
/// reading channels [h*d/heads, (h+1)*d/heads) of `v`.
Var attention_apply(Var scores, Var v, int heads);
/// sum_r weight[r] * (logsumexp(logits[r]) - logits[r, target[r]]) as 1 x 1.
/// Rows with weight 0 are skipped entirely.
Var softmax_cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights);

/// Row-wise softmax, no tape involvement.
Matrix softmax_rows(const Matrix& logits);

}  // namespace dinas::ad
