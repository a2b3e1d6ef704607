// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

// dinas: train, sample, eval, analyze and ablate from the command line.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dinas/harness.hpp"
#include "dinas/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json with_header(json body, const std::string& command, json echo) {
  body["schema_version"] = dinas::kReportSchemaVersion;
  body["command"] = command;
  body["config_echo"] = std::move(echo);
  return body;
}

void emit(const fs::path& path, const json& report) {
  dinas::io::write_json(path, report);
  std::cout << report.dump(2) << "\n";
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (item.find_first_not_of(" \t", used) != std::string::npos) {
      throw std::invalid_argument("grid value '" + item + "' is not a number");
    }
    grid.push_back(v);
  }
  if (grid.empty()) throw std::invalid_argument("ablation grid is empty");
  return grid;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::optional<int> count;
  std::optional<int> queries;
  std::optional<int> runs;
  std::string out;
  std::string run;
  std::vector<std::string> conditions;
  std::string cells;
  std::string benchmark;
  std::string training_set;
  std::string kind;
  std::string grid;
  std::string combine_space;
  bool no_filter = false;
};

fs::path out_dir(const Options& o, const fs::path& fallback) { return o.out.empty() ? fallback : fs::path(o.out); }

int cmd_train(const Options& o) {
  auto config = dinas::load_config(o.config);
  if (o.seed) config.train.seed = *o.seed;
  const auto dir =
      out_dir(o, dinas::io::default_run_root() / (config.space.name + "-seed" + std::to_string(config.train.seed)));
  const auto dataset = dinas::config_dataset(config);
  const auto start = std::chrono::steady_clock::now();
  const auto result = dinas::train_loop(dataset, config.space, config.schema, config.model, config.train,
                                        [&](int epoch, double loss) {
                                          std::cerr << "epoch " << epoch + 1 << "/" << config.train.epochs
                                                    << " loss " << loss << "\n";
                                        });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  dinas::save_run(dir, result, dataset);
  emit(dir / "train_report.json",
       with_header({{"run_dir", dir.string()},
                    {"final_loss", result.manifest.final_loss},
                    {"steps", result.state.step},
                    {"training_cells", dataset.size()},
                    {"seconds", seconds},
                    {"schema_hash", result.manifest.schema.hash()}},
                   "train", config.raw));
  return 0;
}

int cmd_sample(const Options& o) {
  const auto run = dinas::load_run(o.run);
  dinas::SampleRequest req;
  req.conditions = dinas::parse_conditions(o.conditions, run.manifest.schema);
  req.count = o.count.value_or(192);
  req.gamma = o.gamma.value_or(-4.0);
  req.seed = o.seed.value_or(0);
  req.filter_valid = !o.no_filter;
  if (!o.combine_space.empty()) req.combine_space = dinas::combine_space_from_string(o.combine_space);
  const auto result = dinas::sample(run.params, req, run.manifest);
  const auto dir = out_dir(o, o.run);
  dinas::io::write_cells(dir / "samples.jsonl", result.cells);
  auto report = dinas::sample_report(result, req, run.manifest);
  report["cells_path"] = (dir / "samples.jsonl").string();
  emit(dir / "sample_report.json", with_header(report, "sample", {{"run", o.run}}));
  if (result.budget_exhausted) std::cerr << "warning: " << result.diagnostic << "\n";
  return 0;
}

// The benchmark comes from --benchmark or from the data source of --config.
dinas::BenchmarkTable benchmark_for(const Options& o) {
  if (!o.benchmark.empty()) return dinas::BenchmarkTable::load(o.benchmark);
  if (!o.config.empty()) {
    auto table = dinas::config_benchmark(dinas::load_config(o.config));
    if (table) return std::move(*table);
    throw std::invalid_argument("config has no 'benchmark' or 'synthetic' source");
  }
  throw std::invalid_argument("give --benchmark PATH or --config PATH");
}

int cmd_eval(const Options& o) {
  const auto cells = dinas::io::read_cells(o.cells);
  const auto table = benchmark_for(o);
  const int runs = o.runs.value_or(10);
  const int queries = o.queries.value_or(192);
  auto report = dinas::evaluate(cells, table, runs, queries);
  const long required = static_cast<long>(runs) * queries;
  const std::vector<dinas::CellGraph> used(cells.begin(), cells.begin() + required);
  report.uniqueness_pct = dinas::uniqueness_pct(used);
  if (!o.run.empty()) {
    const auto run = dinas::load_run(o.run);
    report.novelty_pct = dinas::novelty_pct(used, dinas::read_training_cells(fs::path(o.run) / "training_set.jsonl"));
    report.feasibility_pct = dinas::feasibility_pct(used, table, run.manifest.schema);
    const auto sample_report = fs::path(o.run) / "sample_report.json";
    if (fs::exists(sample_report)) {
      report.seconds_per_arch = dinas::io::read_json(sample_report).at("seconds_per_arch").get<double>();
    }
  }
  auto body = dinas::eval_report_to_json(report);
  body["query_counter"] = table.query_count();
  const auto dir = out_dir(o, fs::path(o.cells).parent_path());
  emit(dir / "eval_report.json",
       with_header(body, "eval",
                   {{"cells", o.cells}, {"benchmark", o.benchmark}, {"config", o.config}, {"runs", runs},
                    {"queries", queries}, {"run", o.run}}));
  return 0;
}

int cmd_analyze(const Options& o) {
  const auto generated = dinas::io::read_cells(o.cells);
  const auto training = dinas::read_training_cells(o.training_set);
  std::optional<dinas::BenchmarkTable> table;
  std::optional<dinas::ConditionSchema> schema;
  if (!o.run.empty()) {
    schema = dinas::load_run(o.run).manifest.schema;
    if (!o.benchmark.empty() || !o.config.empty()) table = benchmark_for(o);
  }
  const auto report =
      dinas::analyze(generated, training, table ? &*table : nullptr, schema ? &*schema : nullptr);
  const auto dir = out_dir(o, fs::path(o.cells).parent_path());
  emit(dir / "analyze_report.json",
       with_header(dinas::analyze_report_to_json(report), "analyze",
                   {{"cells", o.cells}, {"training_set", o.training_set}, {"run", o.run}}));
  return 0;
}

int cmd_ablate(const Options& o) {
  auto config = dinas::load_config(o.config);
  if (o.seed) config.train.seed = *o.seed;
  if (o.runs) config.eval_runs = *o.runs;
  if (o.queries) config.eval_queries = *o.queries;
  const auto grid = parse_grid(o.grid);
  const auto dir = out_dir(o, dinas::io::default_run_root() / ("ablate-" + o.kind));
  const auto rows = dinas::run_ablation(o.kind, grid, config, dir);
  std::cout << dinas::ablation_csv(rows);
  int failed = 0;
  for (const auto& r : rows) failed += !r.ok;
  if (failed > 0) std::cerr << failed << " of " << rows.size() << " settings failed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dinas: conditional graph diffusion for architecture cells"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "train a denoiser from a run config");
  train->add_option("--config", o.config, "run config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", o.seed, "override the training seed");
  train->add_option("--out", o.out, "run directory");

  auto* sample = app.add_subcommand("sample", "generate cells from a trained run");
  sample->add_option("--run", o.run, "run directory")->required()->check(CLI::ExistingDirectory);
  sample->add_option("--condition", o.conditions, "NAME=CLASS, repeatable");
  sample->add_option("--count", o.count, "number of cells");
  sample->add_option("--gamma", o.gamma, "guidance scale");
  sample->add_option("--seed", o.seed, "sampling seed");
  sample->add_option("--combine-space", o.combine_space, "log or probability");
  sample->add_flag("--no-filter", o.no_filter, "keep invalid cells");
  sample->add_option("--out", o.out, "output directory (default: the run directory)");

  auto* eval = app.add_subcommand("eval", "search-style evaluation against a benchmark");
  eval->add_option("--cells", o.cells, "generated cells (JSON lines)")->required()->check(CLI::ExistingFile);
  eval->add_option("--benchmark", o.benchmark, "benchmark JSON lines")->check(CLI::ExistingFile);
  eval->add_option("--config", o.config, "run config whose data source is the benchmark")->check(CLI::ExistingFile);
  eval->add_option("--run", o.run, "run directory for novelty and feasibility")->check(CLI::ExistingDirectory);
  eval->add_option("--runs", o.runs, "number of runs R");
  eval->add_option("--queries", o.queries, "queries per run Q");
  eval->add_option("--out", o.out, "output directory");

  auto* analyze = app.add_subcommand("analyze", "novelty, uniqueness and feasibility of generations");
  analyze->add_option("--cells", o.cells, "generated cells")->required()->check(CLI::ExistingFile);
  analyze->add_option("--training-set", o.training_set, "training cells")->required()->check(CLI::ExistingFile);
  analyze->add_option("--run", o.run, "run directory (schema for feasibility)")->check(CLI::ExistingDirectory);
  analyze->add_option("--benchmark", o.benchmark, "benchmark JSON lines")->check(CLI::ExistingFile);
  analyze->add_option("--config", o.config, "run config whose data source is the benchmark")->check(CLI::ExistingFile);
  analyze->add_option("--out", o.out, "output directory");

  auto* ablate = app.add_subcommand("ablate", "sweep gamma, class count or training-set size");
  ablate->add_option("--kind", o.kind, "gamma, classes or train-size")
      ->required()
      ->check(CLI::IsMember({"gamma", "classes", "train-size"}));
  ablate->add_option("--grid", o.grid, "comma-separated values")->required();
  ablate->add_option("--config", o.config, "base run config")->required()->check(CLI::ExistingFile);
  ablate->add_option("--seed", o.seed, "override the training seed");
  ablate->add_option("--runs", o.runs, "runs per setting");
  ablate->add_option("--queries", o.queries, "queries per run");
  ablate->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(o);
    if (*sample) return cmd_sample(o);
    if (*eval) return cmd_eval(o);
    if (*analyze) return cmd_analyze(o);
    if (*ablate) return cmd_ablate(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
