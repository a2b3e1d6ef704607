// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dinas/bench.hpp"
#include "dinas/cell_graph.hpp"
#include "dinas/conditioning.hpp"
#include "dinas/sampling.hpp"
#include "dinas/training.hpp"

namespace dinas {

inline constexpr const char* kReportSchemaVersion = "dinas-report/1";

/// A run configuration file. Exactly one data source is required: "dataset"
/// (JSON-lines cells with "metrics"), "benchmark" (a benchmark dump) or
/// "synthetic" (parameters of the synthetic benchmark over an enumerable space).
struct HarnessConfig {
  SearchSpaceSpec space;
  std::optional<std::string> dataset_path;
  std::optional<std::string> benchmark_path;
  std::optional<nlohmann::json> synthetic;
  std::optional<long> train_subset;  // random subset of the source, drawn with the train seed
  ConditionSchema schema;
  DenoiserConfig model;
  TrainConfig train;
  SampleRequest sample;  // "conditions" given by name, e.g. {"acc": 0}
  int eval_runs = 10;
  int eval_queries = 192;
  nlohmann::json raw;  // echoed into reports
};

/// Throws std::invalid_argument naming the offending field.
HarnessConfig parse_config(const nlohmann::json& j);
HarnessConfig load_config(const std::filesystem::path& path);

/// Parses NAME=CLASS pairs against the schema; unnamed conditions stay null.
ConditionVector parse_conditions(const std::vector<std::string>& pairs, const ConditionSchema& schema);
ConditionVector conditions_from_json(const nlohmann::json& j, const ConditionSchema& schema);

/// The benchmark the config points at (loaded or synthesized); nullopt for a
/// plain dataset source.
std::optional<BenchmarkTable> config_benchmark(const HarnessConfig& config);
std::vector<DatasetEntry> config_dataset(const HarnessConfig& config);

struct EvalReport {
  int runs = 0;
  int queries_per_run = 0;
  double max_val_acc_mean = 0.0;
  double max_val_acc_std = 0.0;  // population std over runs with at least one hit
  double corresponding_test_acc_mean = 0.0;
  int runs_without_hits = 0;
  long misses = 0;
  long queries_used = 0;
  std::optional<double> novelty_pct;
  std::optional<double> uniqueness_pct;
  std::optional<double> feasibility_pct;
  std::optional<double> seconds_per_arch;
};

nlohmann::json eval_report_to_json(const EvalReport& r);

/// Run r queries cells [r*Q, (r+1)*Q) in generation order and keeps the best
/// validation accuracy with its test accuracy. Throws when Q < 1, R < 1 or
/// fewer than R*Q cells are given.
EvalReport evaluate(const std::vector<CellGraph>& cells, const BenchmarkTable& table, int runs, int queries);

struct AnalyzeReport {
  long generations = 0;
  double novelty_pct = 0.0;
  double uniqueness_pct = 0.0;
  std::optional<double> feasibility_pct;
  long feasibility_unknown = 0;  // cells missing from the benchmark, counted infeasible
};

nlohmann::json analyze_report_to_json(const AnalyzeReport& r);

/// Novelty: share of generations whose key is absent from the training set.
/// Uniqueness: share of generations whose key occurs exactly once among them.
double novelty_pct(const std::vector<CellGraph>& generated, const std::vector<CellGraph>& training);
double uniqueness_pct(const std::vector<CellGraph>& generated);

/// Share of cells that meet every latency condition of the schema (class 0),
/// looked up without touching the query counter. nullopt when the schema has
/// no latency condition.
std::optional<double> feasibility_pct(const std::vector<CellGraph>& cells, const BenchmarkTable& table,
                                      const ConditionSchema& schema, long* unknown = nullptr);

AnalyzeReport analyze(const std::vector<CellGraph>& generated, const std::vector<CellGraph>& training,
                      const BenchmarkTable* table = nullptr, const ConditionSchema* schema = nullptr);

/// Percentile splits used by the class-count ablation, d = 2..5.
std::vector<double> class_split_percentiles(int classes);

struct AblationRow {
  std::string kind;
  std::string setting;
  bool ok = false;
  std::string error;
  EvalReport eval;
  double validity_rate = 0.0;
};

/// One train + sample + eval cycle per grid value; a failing setting is
/// recorded in its row and the sweep continues. The gamma sweep shares one
/// trained model since training does not depend on gamma.
std::vector<AblationRow> run_ablation(const std::string& kind, const std::vector<double>& grid,
                                      const HarnessConfig& base, const std::filesystem::path& out_dir);
std::string ablation_csv(const std::vector<AblationRow>& rows);

/// Cells of a training_set.jsonl written by save_run.
std::vector<CellGraph> read_training_cells(const std::filesystem::path& path);

}  // namespace dinas
