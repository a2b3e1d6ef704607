// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#include "dinas/autodiff.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace dinas::ad {

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(const Matrix& value) {
  Node n;
  n.ref = &value;
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, bool needs_grad, Backward back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_ && needs_grad;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.has_grad) return n.grad;
  const Matrix& val = value(v);
  return Matrix::Zero(val.rows(), val.cols());
}

void Tape::accumulate(Var v, const Matrix& g) {
  accumulate_with(v, [&](Matrix& dst) { dst += g; });
}

void Tape::backward(Var out) {
  if (!record_) throw std::logic_error("backward() on a tape that does not record");
  const Matrix& val = value(out);
  if (val.rows() != 1 || val.cols() != 1) throw std::invalid_argument("backward() needs a 1x1 output");
  accumulate(out, Matrix::Ones(1, 1));
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.back) continue;
    n.back(*this, n.grad);
  }
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  require(A.cols() == B.rows(), "matmul: inner dimensions differ");
  Matrix out = A * B;
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a)) tp.accumulate_with(a, [&](Matrix& d) { d.noalias() += g * tp.value(b).transpose(); });
    if (tp.needs_grad(b)) tp.accumulate_with(b, [&](Matrix& d) { d.noalias() += tp.value(a).transpose() * g; });
  });
}

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "add: shape mismatch");
  return t.push(A + B, t.needs_grad(a) || t.needs_grad(b), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = *a.tape;
  const Matrix& A = t.value(a);
  const Matrix& R = t.value(row);
  require(R.rows() == 1 && R.cols() == A.cols(), "add_row: row shape mismatch");
  Matrix out = A.rowwise() + R.row(0);
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(row), [a, row](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.needs_grad(row)) tp.accumulate_with(row, [&](Matrix& d) { d.row(0) += g.colwise().sum(); });
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  return t.push(t.value(a) * s, t.needs_grad(a), [a, s](Tape& tp, const Matrix& g) {
    tp.accumulate_with(a, [&](Matrix& d) { d += g * s; });
  });
}

Var mul_const(Var a, const Matrix& mask) {
  Tape& t = *a.tape;
  require(mask.rows() == t.value(a).rows() && mask.cols() == t.value(a).cols(), "mul_const: shape mismatch");
  auto m = std::make_shared<Matrix>(mask);
  Matrix out = t.value(a).cwiseProduct(*m);
  return t.push(std::move(out), t.needs_grad(a), [a, m](Tape& tp, const Matrix& g) {
    tp.accumulate_with(a, [&](Matrix& d) { d += g.cwiseProduct(*m); });
  });
}

Var silu(Var a) {
  Tape& t = *a.tape;
  const Matrix& x = t.value(a);
  auto sig = std::make_shared<Matrix>((1.0 + (-x.array()).exp()).inverse().matrix());
  Matrix out = x.cwiseProduct(*sig);
  return t.push(std::move(out), t.needs_grad(a), [a, sig](Tape& tp, const Matrix& g) {
    const auto& xv = tp.value(a).array();
    const auto& s = sig->array();
    tp.accumulate_with(a, [&](Matrix& d) { d.array() += g.array() * s * (1.0 + xv * (1.0 - s)); });
  });
}

Var layer_norm(Var a, Var gain, Var offset, double eps) {
  Tape& t = *a.tape;
  const Matrix& x = t.value(a);
  const Matrix& G = t.value(gain);
  const Matrix& B = t.value(offset);
  const auto cols = x.cols();
  require(G.rows() == 1 && G.cols() == cols && B.rows() == 1 && B.cols() == cols, "layer_norm: parameter shape");
  auto xhat = std::make_shared<Matrix>(x.rows(), cols);
  auto inv = std::make_shared<Vector>(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    (*inv)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (x.row(r).array() - mean) * (*inv)(r);
  }
  Matrix out = (xhat->array().rowwise() * G.row(0).array()).rowwise() + B.row(0).array();
  const bool ng = t.needs_grad(a) || t.needs_grad(gain) || t.needs_grad(offset);
  return t.push(std::move(out), ng, [a, gain, offset, xhat, inv](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(gain)) {
      tp.accumulate_with(gain, [&](Matrix& d) { d.row(0) += g.cwiseProduct(*xhat).colwise().sum(); });
    }
    if (tp.needs_grad(offset)) tp.accumulate_with(offset, [&](Matrix& d) { d.row(0) += g.colwise().sum(); });
    if (tp.needs_grad(a)) {
      const Matrix& G = tp.value(gain);
      const double n = static_cast<double>(g.cols());
      tp.accumulate_with(a, [&](Matrix& d) {
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const RowVector dxhat = g.row(r).cwiseProduct(G.row(0));
          const double sum_d = dxhat.sum();
          const double sum_dx = dxhat.dot(xhat->row(r));
          d.row(r).array() += (*inv)(r) / n * (n * dxhat.array() - sum_d - xhat->row(r).array() * sum_dx);
        }
      });
    }
  });
}

Var gather_row(Var table, int index) {
  Tape& t = *table.tape;
  const Matrix& T = t.value(table);
  require(index >= 0 && index < T.rows(), "gather_row: index out of range");
  Matrix out = T.row(index);
  return t.push(std::move(out), t.needs_grad(table), [table, index](Tape& tp, const Matrix& g) {
    tp.accumulate_with(table, [&](Matrix& d) { d.row(index) += g.row(0); });
  });
}

Var pair_products(Var q, Var k, double s) {
  Tape& t = *q.tape;
  const Matrix& Q = t.value(q);
  const Matrix& K = t.value(k);
  require(Q.rows() == K.rows() && Q.cols() == K.cols(), "pair_products: shape mismatch");
  const auto n = Q.rows();
  Matrix out(n * n, Q.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out.row(i * n + j) = s * Q.row(i).cwiseProduct(K.row(j));
  return t.push(std::move(out), t.needs_grad(q) || t.needs_grad(k), [q, k, s, n](Tape& tp, const Matrix& g) {
    const Matrix& Qv = tp.value(q);
    const Matrix& Kv = tp.value(k);
    if (tp.needs_grad(q)) {
      tp.accumulate_with(q, [&](Matrix& d) {
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j) d.row(i) += s * g.row(i * n + j).cwiseProduct(Kv.row(j));
      });
    }
    if (tp.needs_grad(k)) {
      tp.accumulate_with(k, [&](Matrix& d) {
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j) d.row(j) += s * g.row(i * n + j).cwiseProduct(Qv.row(i));
      });
    }
  });
}

Var head_sum(Var y, int heads) {
  Tape& t = *y.tape;
  const Matrix& Y = t.value(y);
  require(heads > 0 && Y.cols() % heads == 0, "head_sum: channels not divisible by heads");
  const auto width = Y.cols() / heads;
  Matrix out(Y.rows(), heads);
  for (int h = 0; h < heads; ++h) out.col(h) = Y.middleCols(h * width, width).rowwise().sum();
  return t.push(std::move(out), t.needs_grad(y), [y, heads, width](Tape& tp, const Matrix& g) {
    tp.accumulate_with(y, [&](Matrix& d) {
      for (int h = 0; h < heads; ++h) d.middleCols(h * width, width).colwise() += g.col(h);
    });
  });
}

Var attention_apply(Var scores, Var v, int heads) {
  Tape& t = *scores.tape;
  const Matrix& S = t.value(scores);
  const Matrix& V = t.value(v);
  const auto n = V.rows();
  require(S.rows() == n * n && S.cols() == heads && V.cols() % heads == 0, "attention_apply: shape mismatch");
  const auto width = V.cols() / heads;
  auto weights = std::make_shared<Matrix>(n * n, heads);
  Matrix out = Matrix::Zero(n, V.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int h = 0; h < heads; ++h) {
      auto logits = S.col(h).segment(i * n, n);
      const double m = logits.maxCoeff();
      auto w = weights->col(h).segment(i * n, n);
      w = (logits.array() - m).exp();
      w /= w.sum();
      out.row(i).segment(h * width, width).noalias() = w.transpose() * V.middleCols(h * width, width);
    }
  }
  const bool ng = t.needs_grad(scores) || t.needs_grad(v);
  return t.push(std::move(out), ng, [scores, v, heads, width, n, weights](Tape& tp, const Matrix& g) {
    const Matrix& Vv = tp.value(v);
    if (tp.needs_grad(v)) {
      tp.accumulate_with(v, [&](Matrix& d) {
        for (Eigen::Index i = 0; i < n; ++i)
          for (int h = 0; h < heads; ++h)
            d.middleCols(h * width, width).noalias() +=
                weights->col(h).segment(i * n, n) * g.row(i).segment(h * width, width);
      });
    }
    if (tp.needs_grad(scores)) {
      tp.accumulate_with(scores, [&](Matrix& d) {
        for (Eigen::Index i = 0; i < n; ++i) {
          for (int h = 0; h < heads; ++h) {
            const Vector da = Vv.middleCols(h * width, width) * g.row(i).segment(h * width, width).transpose();
            const auto w = weights->col(h).segment(i * n, n);
            const double inner = w.dot(da);
            d.col(h).segment(i * n, n).array() += w.array() * (da.array() - inner);
          }
        }
      });
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights) {
  Tape& t = *logits.tape;
  const Matrix& L = t.value(logits);
  require(static_cast<Eigen::Index>(targets.size()) == L.rows() &&
              static_cast<Eigen::Index>(weights.size()) == L.rows(),
          "softmax_cross_entropy: one target and weight per row");
  auto grad_rows = std::make_shared<Matrix>(Matrix::Zero(L.rows(), L.cols()));
  double total = 0.0;
  for (Eigen::Index r = 0; r < L.rows(); ++r) {
    const double w = weights[r];
    if (w == 0.0) continue;
    const double m = L.row(r).maxCoeff();
    const RowVector e = (L.row(r).array() - m).exp();
    const double z = e.sum();
    total += w * (m + std::log(z) - L(r, targets[r]));
    grad_rows->row(r) = w * e / z;
    (*grad_rows)(r, targets[r]) -= w;
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  return t.push(std::move(out), t.needs_grad(logits), [logits, grad_rows](Tape& tp, const Matrix& g) {
    tp.accumulate_with(logits, [&](Matrix& d) { d += g(0, 0) * *grad_rows; });
  });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    out.row(r) = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace dinas::ad
