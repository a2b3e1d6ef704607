// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dinas/cell_graph.hpp"
#include "dinas/rng.hpp"
#include "dinas/types.hpp"

namespace dinas {

/// Cosine schedule abar[t] = cos(0.5*pi*(t/T + s)/(1 + s))^2, t = 0..T.
template <typename T>
struct DiffusionScheduleT {
  int steps = 0;
  T offset = T(0.008);
  std::vector<T> abar;

  static DiffusionScheduleT cosine(int steps, T offset = T(0.008)) {
    if (steps < 1) throw std::invalid_argument("schedule needs at least one step, got " + std::to_string(steps));
    if (!(offset > T(0)) || !(offset < T(0.1))) throw std::invalid_argument("schedule offset must lie in (0, 0.1)");
    DiffusionScheduleT s;
    s.steps = steps;
    s.offset = offset;
    s.abar.resize(steps + 1);
    const T half_pi = T(0.5) * T(M_PI);
    for (int t = 0; t <= steps; ++t) {
      const T c = std::cos(half_pi * (T(t) / T(steps) + offset) / (T(1) + offset));
      s.abar[t] = c * c;
    }
    // cos(pi/2) is not exactly zero in floating point
    s.abar[steps] = T(0);
    return s;
  }

  /// Arbitrary non-increasing sequence in [0, 1]; used for toy instances.
  static DiffusionScheduleT from_abar(std::vector<T> values) {
    if (values.size() < 2) throw std::invalid_argument("schedule needs at least two abar values");
    for (std::size_t t = 0; t < values.size(); ++t) {
      if (values[t] < T(0) || values[t] > T(1)) throw std::invalid_argument("abar outside [0, 1]");
      if (t > 0 && values[t] > values[t - 1]) throw std::invalid_argument("abar must be non-increasing");
    }
    DiffusionScheduleT s;
    s.steps = static_cast<int>(values.size()) - 1;
    s.offset = T(0);
    s.abar = std::move(values);
    return s;
  }

  void require_step(int t) const {
    if (t < 1 || t > steps) {
      throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(steps) + "]");
    }
  }

  /// Retention factor of the single step t-1 -> t. The chain starts from
  /// clean data, so the first step keeps abar[1] regardless of abar[0]; the
  /// product of factors over 1..t is then exactly abar[t].
  T step_retention(int t) const {
    require_step(t);
    if (t == 1) return abar[1];
    if (abar[t - 1] == T(0)) {
      throw std::domain_error("single-step kernel at t=" + std::to_string(t) + " is degenerate: abar[t-1] = 0");
    }
    return abar[t] / abar[t - 1];
  }
};

template <typename T>
struct MarginalsT {
  RowVectorT<T> nodes;  // over op_vocab
  RowVectorT<T> edges;  // over edge_vocab

  void check(T tol = T(1e-9)) const {
    for (const auto* m : {&nodes, &edges}) {
      if (m->size() == 0 || (m->array() < T(0)).any() || std::abs(m->sum() - T(1)) > tol) {
        throw std::invalid_argument("marginals must be non-negative and sum to 1");
      }
    }
  }

  /// Empirical op frequencies over all nodes and edge-category frequencies
  /// over the strict upper triangle (the only noised positions).
  static MarginalsT from_cells(const std::vector<CellGraph>& cells, int num_ops, int num_edge_types) {
    if (cells.empty()) throw std::invalid_argument("marginals need at least one cell");
    MarginalsT m{RowVectorT<T>::Zero(num_ops), RowVectorT<T>::Zero(num_edge_types)};
    long node_total = 0;
    long edge_total = 0;
    for (const auto& c : cells) {
      const int n = c.num_nodes();
      for (int i = 0; i < n; ++i) {
        m.nodes[c.ops[i]] += T(1);
        ++node_total;
        for (int j = i + 1; j < n; ++j) {
          m.edges[c.edges(i, j)] += T(1);
          ++edge_total;
        }
      }
    }
    m.nodes /= T(node_total);
    if (edge_total > 0) {
      m.edges /= T(edge_total);
    } else {
      m.edges[0] = T(1);
    }
    return m;
  }
};

enum class KernelLevel { kCumulative, kSingleStep };

/// retention * I + (1 - retention) * 1 m'
template <typename T>
MatrixT<T> marginal_kernel(T retention, const RowVectorT<T>& marginal) {
  const auto k = marginal.size();
  MatrixT<T> q = MatrixT<T>::Ones(k, 1) * marginal * (T(1) - retention);
  q.diagonal().array() += retention;
  return q;
}

template <typename T>
struct TransitionKernelT {
  MatrixT<T> nodes;
  MatrixT<T> edges;
  KernelLevel level = KernelLevel::kCumulative;
};

template <typename T>
TransitionKernelT<T> kernel_at(const DiffusionScheduleT<T>& schedule, const MarginalsT<T>& marginals, int t,
                               KernelLevel level) {
  schedule.require_step(t);
  const T retention = level == KernelLevel::kCumulative ? schedule.abar[t] : schedule.step_retention(t);
  return {marginal_kernel(retention, marginals.nodes), marginal_kernel(retention, marginals.edges), level};
}

/// Cumulative kernel from clean data to step t, with t = 0 the identity.
template <typename T>
TransitionKernelT<T> cumulative_from_clean(const DiffusionScheduleT<T>& schedule, const MarginalsT<T>& marginals,
                                           int t) {
  if (t == 0) {
    return {MatrixT<T>::Identity(marginals.nodes.size(), marginals.nodes.size()),
            MatrixT<T>::Identity(marginals.edges.size(), marginals.edges.size()), KernelLevel::kCumulative};
  }
  return kernel_at(schedule, marginals, t, KernelLevel::kCumulative);
}

/// Noised categories after t steps. Node i is drawn from onehot.nodes.row(i) * QX;
/// edge (i, j), j > i, from onehot.edges.row(i*n+j) * QE. The diagonal and
/// lower triangle stay absent.
template <typename T>
CellGraph apply_noise(const OneHotCell& onehot, int t, const DiffusionScheduleT<T>& schedule,
                      const MarginalsT<T>& marginals, Rng& rng) {
  const auto kernel = kernel_at(schedule, marginals, t, KernelLevel::kCumulative);
  const int n = onehot.num_nodes();
  CellGraph noisy = CellGraph::with_ops(std::vector<int>(n, 0));
  for (int i = 0; i < n; ++i) {
    const RowVectorT<T> row = onehot.nodes.row(i).template cast<T>() * kernel.nodes;
    noisy.ops[i] = rng.categorical(row);
    for (int j = i + 1; j < n; ++j) {
      const RowVectorT<T> erow = onehot.edges.row(pair_row(i, j, n)).template cast<T>() * kernel.edges;
      noisy.edges(i, j) = rng.categorical(erow);
    }
  }
  return noisy;
}

/// Per-node and per-edge category distributions for step t-1.
template <typename T>
struct PosteriorT {
  MatrixT<T> nodes;  // n x |op_vocab|
  MatrixT<T> edges;  // (n*n) x |edge_vocab|
};

namespace detail {

// For an observed category z, row x of the returned matrix is
// p(x^{t-1} = y | x^t = z, x^0 = x) = Qs[y, z] * Qc[x, y] / sum_y'(...).
// Rows with a zero normalizer (x cannot reach z) are left at zero and flagged.
template <typename T>
MatrixT<T> bayes_table(const MatrixT<T>& step, const MatrixT<T>& cumulative_prev, int z, std::vector<bool>& reachable) {
  MatrixT<T> table = cumulative_prev.array().rowwise() * step.col(z).transpose().array();
  const auto k = table.rows();
  reachable.assign(k, false);
  for (Eigen::Index x = 0; x < k; ++x) {
    const T norm = table.row(x).sum();
    if (norm > T(0)) {
      table.row(x) /= norm;
      reachable[x] = true;
    } else {
      table.row(x).setZero();
    }
  }
  return table;
}

template <typename T, typename RowIn>
void mix_row(const RowIn& predicted, const MatrixT<T>& table, const std::vector<bool>& reachable,
             Eigen::Ref<RowVectorT<T>> out, int i, int j, int t, int z) {
  T mass = T(0);
  out.setZero();
  for (Eigen::Index x = 0; x < table.rows(); ++x) {
    if (!reachable[x]) continue;
    const T p = predicted(x);
    if (p == T(0)) continue;
    out += p * table.row(x);
    mass += p;
  }
  if (!(mass > T(0))) {
    std::ostringstream msg;
    msg << "posterior has a zero normalizer at ";
    if (j < 0) {
      msg << "node " << i;
    } else {
      msg << "edge (" << i << "," << j << ")";
    }
    msg << ", t=" << t << ", category " << z;
    throw std::domain_error(msg.str());
  }
  out /= mass;
}

}  // namespace detail

/// p(x^{t-1} | G^t) = sum_x p(x^{t-1} | x^0 = x, x^t) * p_hat(x), per node and
/// per upper-triangle edge. Predicted mass on clean categories that cannot
/// produce the observed x^t carries no information and is dropped.
template <typename T, typename DerivedX, typename DerivedE>
PosteriorT<T> posterior_step(const Eigen::MatrixBase<DerivedX>& pred_nodes, const Eigen::MatrixBase<DerivedE>& pred_edges,
                             const CellGraph& noisy, int t, const DiffusionScheduleT<T>& schedule,
                             const MarginalsT<T>& marginals) {
  const auto step = kernel_at(schedule, marginals, t, KernelLevel::kSingleStep);
  const auto prev = cumulative_from_clean(schedule, marginals, t - 1);
  const int n = noisy.num_nodes();
  const auto kx = marginals.nodes.size();
  const auto ke = marginals.edges.size();
  if (pred_nodes.rows() != n || pred_nodes.cols() != kx || pred_edges.rows() != n * n || pred_edges.cols() != ke) {
    throw std::invalid_argument("posterior_step: prediction shapes do not match the noisy graph");
  }

  std::vector<MatrixT<T>> node_tables(kx), edge_tables(ke);
  std::vector<std::vector<bool>> node_reach(kx), edge_reach(ke);
  std::vector<bool> node_built(kx, false), edge_built(ke, false);

  PosteriorT<T> out{MatrixT<T>::Zero(n, kx), MatrixT<T>::Zero(n * n, ke)};
  for (int i = 0; i < n; ++i) {
    const int z = noisy.ops[i];
    if (!node_built[z]) {
      node_tables[z] = detail::bayes_table(step.nodes, prev.nodes, z, node_reach[z]);
      node_built[z] = true;
    }
    detail::mix_row<T>(pred_nodes.row(i).template cast<T>(), node_tables[z], node_reach[z], out.nodes.row(i), i, -1,
                       t, z);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto r = pair_row(i, j, n);
      if (j <= i) {
        out.edges(r, 0) = T(1);
        continue;
      }
      const int z = noisy.edges(i, j);
      if (!edge_built[z]) {
        edge_tables[z] = detail::bayes_table(step.edges, prev.edges, z, edge_reach[z]);
        edge_built[z] = true;
      }
      detail::mix_row<T>(pred_edges.row(r).template cast<T>(), edge_tables[z], edge_reach[z], out.edges.row(r), i, j,
                         t, z);
    }
  }
  return out;
}

using DiffusionSchedule = DiffusionScheduleT<Scalar>;
using Marginals = MarginalsT<Scalar>;
using TransitionKernel = TransitionKernelT<Scalar>;
using Posterior = PosteriorT<Scalar>;

}  // namespace dinas
