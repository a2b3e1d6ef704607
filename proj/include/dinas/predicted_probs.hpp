// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dinas/types.hpp"

namespace dinas {

/// Denoiser output: a distribution over clean op labels per node and over
/// clean edge categories per ordered node pair (row i*n + j). Only the strict
/// upper triangle of the edge rows is meaningful.
template <typename T>
struct PredictedProbsT {
  MatrixT<T> nodes;
  MatrixT<T> edges;

  int num_nodes() const { return static_cast<int>(nodes.rows()); }
  bool same_shape(const PredictedProbsT& o) const {
    return nodes.rows() == o.nodes.rows() && nodes.cols() == o.nodes.cols() && edges.rows() == o.edges.rows() &&
           edges.cols() == o.edges.cols();
  }
};

using PredictedProbs = PredictedProbsT<Scalar>;

}  // namespace dinas
