// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dinas/bench.hpp"
#include "dinas/cell_graph.hpp"
#include "dinas/conditioning.hpp"
#include "dinas/denoiser.hpp"
#include "dinas/noise.hpp"
#include "dinas/rng.hpp"

namespace dinas {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 2e-4;
  double weight_decay = 1e-12;
  double epsilon_dropout = 0.1;
  double lambda_edge = 5.0;
  int steps = 500;  // diffusion steps T
  double schedule_offset = 0.008;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void check() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Parameters plus AdamW moments. Moments mirror the parameter shapes.
struct TrainState {
  DenoiserParams params;
  ParamMap m;
  ParamMap v;
  long step = 0;
  std::vector<double> loss_history;

  static TrainState start(DenoiserParams params);
};

/// One AdamW update with decoupled decay: p <- p * (1 - weight_decay) - lr * mhat / (sqrt(vhat) + eps).
/// The decay factor does not scale with the learning rate.
void adamw_update(TrainState& state, const ParamMap& grads, const TrainConfig& config);

struct LabeledCell {
  CellGraph cell;
  ConditionVector cond;
};

/// Per sample: t ~ U{1..T}, joint condition dropout, marginal noise; then the
/// mean loss over the batch and one AdamW step. Returns the pre-update loss.
double train_step(TrainState& state, std::span<const LabeledCell> batch, const DiffusionSchedule& schedule,
                  const Marginals& marginals, const TrainConfig& config, Rng& rng);

/// A training cell with its raw metrics keyed by metric name ("val_acc", "latency:cpu", ...).
struct DatasetEntry {
  CellGraph cell;
  std::map<std::string, double> metrics;
};

std::vector<DatasetEntry> dataset_from_benchmark(const BenchmarkTable& table);

/// Everything sampling needs besides the weights.
struct RunManifest {
  SearchSpaceSpec space;
  ConditionSchema schema;  // thresholds calibrated
  int steps = 0;
  double schedule_offset = 0.008;
  Marginals marginals;
  std::map<int, double> node_count_dist;
  TrainConfig train;
  DenoiserConfig model;
  double final_loss = 0.0;
  long num_training_cells = 0;

  DiffusionSchedule schedule() const { return DiffusionSchedule::cosine(steps, schedule_offset); }
};

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

/// Percentile-based thresholds are recomputed from the dataset; conditions
/// with explicit thresholds are kept.
ConditionSchema calibrate_schema(ConditionSchema schema, const std::vector<DatasetEntry>& dataset);

struct TrainLogRow {
  long step;
  int epoch;
  double loss;
};

struct TrainResult {
  TrainState state;
  RunManifest manifest;
  std::vector<TrainLogRow> log;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Calibrates the schema, computes marginals and runs epochs x ceil(N / batch)
/// steps over per-epoch shuffles of the dataset.
TrainResult train_loop(const std::vector<DatasetEntry>& dataset, const SearchSpaceSpec& space,
                       const ConditionSchema& schema, const DenoiserConfig& model, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});

/// checkpoint.json, manifest.json, train_log.csv and training_set.jsonl.
void save_run(const std::filesystem::path& dir, const TrainResult& result, const std::vector<DatasetEntry>& dataset);

struct LoadedRun {
  DenoiserParams params;
  RunManifest manifest;
};

/// Loads a run directory; the checkpoint must carry the manifest's schema hash.
LoadedRun load_run(const std::filesystem::path& dir);

}  // namespace dinas
