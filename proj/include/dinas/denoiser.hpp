// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dinas/cell_graph.hpp"
#include "dinas/conditioning.hpp"
#include "dinas/predicted_probs.hpp"
#include "dinas/rng.hpp"
#include "dinas/types.hpp"

namespace dinas {

struct DenoiserConfig {
  int n_layers = 5;
  int hidden_dim = 32;
  int n_heads = 4;
  int pe_dim = 32;  // must equal hidden_dim: the encoding is added to node features
  int edge_dim = 32;
  int ffn_dim = 64;
  double dropout = 0.0;

  void check() const;
};

/// Sizes fixed by the search space, condition schema and noise schedule.
struct ModelShape {
  int num_ops = 0;
  int num_edge_types = 0;
  std::vector<int> condition_classes;  // d_k per condition
  int diffusion_steps = 0;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

using ParamMap = std::map<std::string, Matrix>;

/// All learnable weights of the graph-transformer denoiser. Each condition k
/// owns an embedding table with d_k class rows followed by one null row.
struct DenoiserParams {
  DenoiserConfig config;
  ModelShape shape;
  ParamMap tensors;

  static DenoiserParams init(const DenoiserConfig& config, const ModelShape& shape, Rng& rng);

  std::size_t num_scalars() const;
  ParamMap zeros_like() const;
  bool all_finite() const;
};

/// Sinusoidal encoding: entry (p, 2i) = sin(p / 10000^(2i/dim)), (p, 2i+1) = cos(...).
Matrix positional_encoding(int n, int dim);
/// The same sinusoids evaluated at the fractional position t / steps.
RowVector timestep_encoding(int t, int steps, int dim);

PredictedProbs forward(const DenoiserParams& params, const OneHotCell& noisy, int t, const ConditionVector& cond);
PredictedProbs forward(const DenoiserParams& params, const CellGraph& noisy, int t, const ConditionVector& cond);

struct LossDiagnostics {
  long floored = 0;  // true-category probabilities clamped to the 1e-12 floor
};

/// Sum of node cross-entropies plus lambda times the sum of strict-upper-
/// triangle edge cross-entropies.
double loss(const PredictedProbs& predicted, const OneHotCell& clean, double lambda,
            LossDiagnostics* diag = nullptr);

struct TrainingExample {
  CellGraph noisy;
  int t = 1;
  ConditionVector cond;
  CellGraph clean;
};

struct GradResult {
  double mean_loss = 0.0;
  ParamMap grads;
};

/// Exact gradient of the batch-mean loss. Dropout (config.dropout > 0) is
/// only applied when `dropout_rng` is given. Throws std::domain_error naming
/// the sample index when a loss is not finite.
GradResult grad(const DenoiserParams& params, std::span<const TrainingExample> batch, double lambda,
                Rng* dropout_rng = nullptr);

/// Mean loss only, through the same graph as grad(); used by checks.
double batch_loss(const DenoiserParams& params, std::span<const TrainingExample> batch, double lambda);

nlohmann::json config_to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

/// Checkpoint: config, shape, schema hash and every parameter under its name.
nlohmann::json checkpoint_to_json(const DenoiserParams& params, const std::string& schema_hash);
/// Throws std::runtime_error when `expected_schema_hash` is non-empty and differs.
DenoiserParams checkpoint_from_json(const nlohmann::json& j, const std::string& expected_schema_hash = "");

}  // namespace dinas
