// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

namespace dinas {

using Scalar = double;

template <typename T>
using MatrixT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVectorT = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using Matrix = MatrixT<Scalar>;
using RowVector = RowVectorT<Scalar>;
using Vector = Eigen::VectorXd;

// Edge-indexed quantities over an n-node graph are stored as (n*n) x C
// matrices; pair (i, j) lives in row i*n + j.
inline Eigen::Index pair_row(Eigen::Index i, Eigen::Index j, Eigen::Index n) { return i * n + j; }

}  // namespace dinas
