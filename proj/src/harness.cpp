// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#include "dinas/harness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "dinas/io.hpp"

namespace dinas {

namespace {

// Runs `fn` and prefixes any error with the config field it was parsing.
template <typename Fn>
auto field(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("config field '") + name + "': " + e.what());
  }
}

}  // namespace

HarnessConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  HarnessConfig c;
  c.raw = j;
  if (!j.contains("space")) throw std::invalid_argument("config field 'space' is required");
  c.space = field("space", [&] { return space_from_json(j.at("space")); });

  int sources = 0;
  if (j.contains("dataset")) {
    c.dataset_path = field("dataset", [&] { return j.at("dataset").get<std::string>(); });
    ++sources;
  }
  if (j.contains("benchmark")) {
    c.benchmark_path = field("benchmark", [&] { return j.at("benchmark").get<std::string>(); });
    ++sources;
  }
  if (j.contains("synthetic")) {
    c.synthetic = j.at("synthetic");
    field("synthetic", [&] { return SyntheticSpec::from_json(*c.synthetic, c.space); });
    if (!c.space.enumerable()) {
      throw std::invalid_argument("config field 'synthetic': space '" + c.space.name + "' is not enumerable");
    }
    ++sources;
  }
  if (sources == 0) {
    throw std::invalid_argument("config field 'dataset' is missing: give 'dataset', 'benchmark' or 'synthetic'");
  }
  if (sources > 1) throw std::invalid_argument("config fields 'dataset', 'benchmark' and 'synthetic' are exclusive");
  if (j.contains("train_subset")) {
    c.train_subset = field("train_subset", [&] { return j.at("train_subset").get<long>(); });
    if (*c.train_subset < 1) throw std::invalid_argument("config field 'train_subset' must be positive");
  }

  if (!j.contains("schema")) throw std::invalid_argument("config field 'schema' is required");
  c.schema = field("schema", [&] { return schema_from_json(j.at("schema")); });
  field("schema", [&] {
    for (const auto& cond : c.schema.conditions) {
      if (cond.percentiles.empty() && static_cast<int>(cond.thresholds.size()) != cond.num_classes - 1) {
        throw std::invalid_argument("condition '" + cond.name + "' needs percentiles or thresholds");
      }
      if (!cond.percentiles.empty() && static_cast<int>(cond.percentiles.size()) != cond.num_classes - 1) {
        throw std::invalid_argument("condition '" + cond.name + "' needs " + std::to_string(cond.num_classes - 1) +
                                    " percentiles");
      }
    }
    return 0;
  });
  c.model = field("model", [&] { return denoiser_config_from_json(j.value("model", nlohmann::json::object())); });
  c.train = field("train", [&] { return train_config_from_json(j.value("train", nlohmann::json::object())); });

  const auto s = j.value("sample", nlohmann::json::object());
  field("sample", [&] {
    c.sample.count = s.value("count", 192);
    c.sample.gamma = s.value("gamma", -4.0);
    c.sample.seed = s.value("seed", std::uint64_t{0});
    c.sample.filter_valid = s.value("filter_valid", true);
    c.sample.combine_space = combine_space_from_string(s.value("combine_space", std::string("log")));
    c.sample.conditions = conditions_from_json(s.value("conditions", nlohmann::json::object()), c.schema);
    if (c.sample.count < 1) throw std::invalid_argument("count must be positive");
    return 0;
  });
  const auto e = j.value("eval", nlohmann::json::object());
  c.eval_runs = field("eval", [&] { return e.value("runs", 10); });
  c.eval_queries = field("eval", [&] { return e.value("queries", 192); });
  return c;
}

HarnessConfig load_config(const std::filesystem::path& path) { return parse_config(io::read_json(path)); }

ConditionVector parse_conditions(const std::vector<std::string>& pairs, const ConditionSchema& schema) {
  auto cond = ConditionVector::null(schema.size());
  for (const auto& p : pairs) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("condition '" + p + "' must look like NAME=CLASS");
    const int k = schema.index_of(p.substr(0, eq));
    const auto value = p.substr(eq + 1);
    std::size_t used = 0;
    int cls = 0;
    try {
      cls = std::stoi(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty()) {
      throw std::invalid_argument("condition '" + p + "': class must be an integer");
    }
    cond.classes[k] = cls;
  }
  check_condition(cond, schema);
  return cond;
}

ConditionVector conditions_from_json(const nlohmann::json& j, const ConditionSchema& schema) {
  auto cond = ConditionVector::null(schema.size());
  for (const auto& [name, value] : j.items()) {
    cond.classes[schema.index_of(name)] = value.is_null() ? ConditionVector::kNull : value.get<int>();
  }
  check_condition(cond, schema);
  return cond;
}

std::optional<BenchmarkTable> config_benchmark(const HarnessConfig& config) {
  if (config.benchmark_path) return BenchmarkTable::load(*config.benchmark_path);
  if (config.synthetic) return synth_benchmark(config.space, SyntheticSpec::from_json(*config.synthetic, config.space));
  return std::nullopt;
}

std::vector<DatasetEntry> config_dataset(const HarnessConfig& config) {
  std::vector<DatasetEntry> data;
  if (config.dataset_path) {
    const auto rows = io::read_jsonl(*config.dataset_path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      try {
        data.push_back({cell_from_json(rows[i]), rows[i].at("metrics").get<std::map<std::string, double>>()});
      } catch (const std::exception& e) {
        throw std::invalid_argument(*config.dataset_path + ": row " + std::to_string(i + 1) + ": " + e.what());
      }
    }
  } else {
    data = dataset_from_benchmark(*config_benchmark(config));
  }
  if (config.train_subset && *config.train_subset < static_cast<long>(data.size())) {
    Rng rng = Rng::stream(config.train.seed, 0x5eb5e7);
    for (std::size_t i = data.size(); i > 1; --i) {
      std::swap(data[i - 1], data[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    data.resize(static_cast<std::size_t>(*config.train_subset));
  }
  return data;
}

nlohmann::json eval_report_to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"runs", r.runs},
          {"queries_per_run", r.queries_per_run},
          {"max_val_acc_mean", r.max_val_acc_mean},
          {"max_val_acc_std", r.max_val_acc_std},
          {"corresponding_test_acc_mean", r.corresponding_test_acc_mean},
          {"runs_without_hits", r.runs_without_hits},
          {"misses", r.misses},
          {"queries_used", r.queries_used},
          {"novelty_pct", opt(r.novelty_pct)},
          {"uniqueness_pct", opt(r.uniqueness_pct)},
          {"feasibility_pct", opt(r.feasibility_pct)},
          {"seconds_per_arch", opt(r.seconds_per_arch)}};
}

EvalReport evaluate(const std::vector<CellGraph>& cells, const BenchmarkTable& table, int runs, int queries) {
  if (queries < 1) throw std::invalid_argument("eval needs at least one query per run");
  if (runs < 1) throw std::invalid_argument("eval needs at least one run");
  const long required = static_cast<long>(runs) * queries;
  if (static_cast<long>(cells.size()) < required) {
    throw std::invalid_argument("eval needs " + std::to_string(required) + " cells (" + std::to_string(runs) + " x " +
                                std::to_string(queries) + "), got " + std::to_string(cells.size()));
  }
  EvalReport r;
  r.runs = runs;
  r.queries_per_run = queries;
  const long before = table.query_count();
  std::vector<double> best_val, best_test;
  for (int run = 0; run < runs; ++run) {
    const BenchmarkRecord* best = nullptr;
    for (int q = 0; q < queries; ++q) {
      const auto* rec = table.query(cells[static_cast<std::size_t>(run) * queries + q]);
      if (!rec) {
        ++r.misses;
        continue;
      }
      if (!best || rec->val_acc > best->val_acc) best = rec;
    }
    if (!best) {
      ++r.runs_without_hits;
      continue;
    }
    best_val.push_back(best->val_acc);
    best_test.push_back(best->test_acc);
  }
  r.queries_used = table.query_count() - before;
  if (!best_val.empty()) {
    const double k = static_cast<double>(best_val.size());
    double sum = 0.0, sum_test = 0.0;
    for (std::size_t i = 0; i < best_val.size(); ++i) {
      sum += best_val[i];
      sum_test += best_test[i];
    }
    r.max_val_acc_mean = sum / k;
    r.corresponding_test_acc_mean = sum_test / k;
    double var = 0.0;
    for (double v : best_val) var += (v - r.max_val_acc_mean) * (v - r.max_val_acc_mean);
    r.max_val_acc_std = std::sqrt(var / k);
  }
  return r;
}

nlohmann::json analyze_report_to_json(const AnalyzeReport& r) {
  return {{"generations", r.generations},
          {"novelty_pct", r.novelty_pct},
          {"uniqueness_pct", r.uniqueness_pct},
          {"feasibility_pct", r.feasibility_pct ? nlohmann::json(*r.feasibility_pct) : nlohmann::json(nullptr)},
          {"feasibility_unknown", r.feasibility_unknown}};
}

double novelty_pct(const std::vector<CellGraph>& generated, const std::vector<CellGraph>& training) {
  if (generated.empty()) return 0.0;
  std::unordered_set<std::string> seen;
  for (const auto& c : training) seen.insert(canonical_key(c).key);
  long novel = 0;
  for (const auto& c : generated) novel += seen.count(canonical_key(c).key) == 0;
  return 100.0 * static_cast<double>(novel) / static_cast<double>(generated.size());
}

double uniqueness_pct(const std::vector<CellGraph>& generated) {
  if (generated.empty()) return 0.0;
  std::unordered_map<std::string, long> counts;
  for (const auto& c : generated) ++counts[canonical_key(c).key];
  long once = 0;
  for (const auto& [key, n] : counts) once += n == 1;
  return 100.0 * static_cast<double>(once) / static_cast<double>(generated.size());
}

std::optional<double> feasibility_pct(const std::vector<CellGraph>& cells, const BenchmarkTable& table,
                                      const ConditionSchema& schema, long* unknown) {
  std::vector<const ConditionSpec*> latency;
  for (const auto& c : schema.conditions)
    if (c.metric.rfind("latency:", 0) == 0) latency.push_back(&c);
  if (latency.empty() || cells.empty()) return std::nullopt;
  long feasible = 0;
  long missing = 0;
  for (const auto& cell : cells) {
    const auto* rec = table.peek(canonical_key(cell));
    if (!rec) {
      ++missing;
      continue;
    }
    feasible += std::all_of(latency.begin(), latency.end(),
                            [&](const ConditionSpec* c) { return discretize(rec->metric(c->metric), *c) == 0; });
  }
  if (unknown) *unknown = missing;
  return 100.0 * static_cast<double>(feasible) / static_cast<double>(cells.size());
}

AnalyzeReport analyze(const std::vector<CellGraph>& generated, const std::vector<CellGraph>& training,
                      const BenchmarkTable* table, const ConditionSchema* schema) {
  AnalyzeReport r;
  r.generations = static_cast<long>(generated.size());
  r.novelty_pct = novelty_pct(generated, training);
  r.uniqueness_pct = uniqueness_pct(generated);
  if (table && schema) r.feasibility_pct = feasibility_pct(generated, *table, *schema, &r.feasibility_unknown);
  return r;
}

std::vector<double> class_split_percentiles(int classes) {
  switch (classes) {
    case 2: return {95};
    case 3: return {80, 95};
    case 4: return {50, 80, 95};
    case 5: return {30, 50, 80, 95};
    default: throw std::invalid_argument("class-count ablation supports 2 to 5 classes, got " + std::to_string(classes));
  }
}

namespace {

std::string format_setting(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

struct Cycle {
  TrainResult trained;
  std::vector<DatasetEntry> dataset;
};

Cycle train_cycle(const HarnessConfig& config) {
  Cycle c;
  c.dataset = config_dataset(config);
  c.trained = train_loop(c.dataset, config.space, config.schema, config.model, config.train);
  return c;
}

AblationRow sample_and_eval(const HarnessConfig& config, const Cycle& cycle, const BenchmarkTable& table) {
  AblationRow row;
  auto request = config.sample;
  request.count = config.eval_runs * config.eval_queries;
  const auto sampled = sample(cycle.trained.state.params, request, cycle.trained.manifest);
  if (sampled.budget_exhausted) throw std::runtime_error(sampled.diagnostic);
  row.eval = evaluate(sampled.cells, table, config.eval_runs, config.eval_queries);
  std::vector<CellGraph> training;
  for (const auto& e : cycle.dataset) training.push_back(e.cell);
  row.eval.novelty_pct = novelty_pct(sampled.cells, training);
  row.eval.uniqueness_pct = uniqueness_pct(sampled.cells);
  row.eval.feasibility_pct = feasibility_pct(sampled.cells, table, cycle.trained.manifest.schema);
  row.eval.seconds_per_arch = sampled.seconds_per_arch;
  row.validity_rate = sampled.validity_rate;
  row.ok = true;
  return row;
}

}  // namespace

std::vector<AblationRow> run_ablation(const std::string& kind, const std::vector<double>& grid,
                                      const HarnessConfig& base, const std::filesystem::path& out_dir) {
  if (grid.empty()) throw std::invalid_argument("ablation grid is empty");
  if (kind != "gamma" && kind != "classes" && kind != "train-size") {
    throw std::invalid_argument("ablation kind must be gamma, classes or train-size, got '" + kind + "'");
  }
  const auto table = config_benchmark(base);
  if (!table) throw std::invalid_argument("ablation needs a 'benchmark' or 'synthetic' source for evaluation");

  std::vector<AblationRow> rows;
  std::optional<Cycle> shared;
  for (double value : grid) {
    AblationRow row;
    try {
      HarnessConfig config = base;
      if (kind == "gamma") {
        config.sample.gamma = value;
        if (!shared) shared = train_cycle(config);
        row = sample_and_eval(config, *shared, *table);
      } else {
        if (kind == "classes") {
          if (value != std::floor(value)) throw std::invalid_argument("class count must be an integer");
          const int d = static_cast<int>(value);
          const auto pct = class_split_percentiles(d);
          auto& acc = config.schema.conditions.front();
          acc.num_classes = d;
          acc.percentiles = pct;
          acc.thresholds.clear();
        } else {
          if (value < 1 || value != std::floor(value)) throw std::invalid_argument("train size must be a positive integer");
          config.train_subset = static_cast<long>(value);
        }
        const auto cycle = train_cycle(config);
        row = sample_and_eval(config, cycle, *table);
      }
    } catch (const std::exception& e) {
      row = AblationRow{};
      row.error = e.what();
    }
    row.kind = kind;
    row.setting = format_setting(value);
    rows.push_back(row);
    io::write_atomic(out_dir / ("ablation_" + kind + ".csv"), ablation_csv(rows));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "schema_version,kind,setting,status,runs,queries,max_val_acc_mean,max_val_acc_std,test_acc_mean,novelty_pct,"
         "uniqueness_pct,feasibility_pct,seconds_per_arch,validity_rate,error\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_setting(*v) : std::string(); };
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << kReportSchemaVersion << ',' << r.kind << ',' << r.setting << ',' << (r.ok ? "ok" : "failed") << ',';
    if (r.ok) {
      out << r.eval.runs << ',' << r.eval.queries_per_run << ',' << r.eval.max_val_acc_mean << ','
          << r.eval.max_val_acc_std << ',' << r.eval.corresponding_test_acc_mean << ',' << opt(r.eval.novelty_pct)
          << ',' << opt(r.eval.uniqueness_pct) << ',' << opt(r.eval.feasibility_pct) << ','
          << opt(r.eval.seconds_per_arch) << ',' << r.validity_rate;
    } else {
      out << ",,,,,,,,,";
    }
    out << ",\"" << err << "\"\n";
  }
  return out.str();
}

std::vector<CellGraph> read_training_cells(const std::filesystem::path& path) { return io::read_cells(path); }

}  // namespace dinas
