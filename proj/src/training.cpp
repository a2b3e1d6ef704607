// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#include "dinas/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dinas/io.hpp"

namespace dinas {

void TrainConfig::check() const {
  if (epochs < 1) throw std::invalid_argument("train.epochs must be positive");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be positive");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train.learning_rate must be non-negative");
  if (!(weight_decay >= 0.0 && weight_decay < 1.0)) throw std::invalid_argument("train.weight_decay must lie in [0, 1)");
  if (!(epsilon_dropout >= 0.0 && epsilon_dropout <= 1.0)) {
    throw std::invalid_argument("train.epsilon_dropout must lie in [0, 1]");
  }
  if (!(lambda_edge >= 0.0)) throw std::invalid_argument("train.lambda_edge must be non-negative");
  if (steps < 1) throw std::invalid_argument("train.T must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("train.adam_eps must be positive");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"epsilon_dropout", c.epsilon_dropout},
          {"lambda_edge", c.lambda_edge},
          {"T", c.steps},
          {"s", c.schedule_offset},
          {"seed", c.seed},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epsilon_dropout = j.value("epsilon_dropout", c.epsilon_dropout);
  c.lambda_edge = j.value("lambda_edge", c.lambda_edge);
  c.steps = j.value("T", c.steps);
  c.schedule_offset = j.value("s", c.schedule_offset);
  c.seed = j.value("seed", c.seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.check();
  return c;
}

TrainState TrainState::start(DenoiserParams params) {
  TrainState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  s.params = std::move(params);
  return s;
}

void adamw_update(TrainState& state, const ParamMap& grads, const TrainConfig& config) {
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const double keep = 1.0 - config.weight_decay;
  for (auto& [name, p] : state.params.tensors) {
    auto& m = state.m.at(name);
    auto& v = state.v.at(name);
    const auto it = grads.find(name);
    if (it != grads.end()) {
      m = config.beta1 * m + (1.0 - config.beta1) * it->second;
      v = config.beta2 * v + (1.0 - config.beta2) * it->second.cwiseAbs2();
    } else {
      m *= config.beta1;
      v *= config.beta2;
    }
    p *= keep;
    p.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_eps);
  }
}

double train_step(TrainState& state, std::span<const LabeledCell> batch, const DiffusionSchedule& schedule,
                  const Marginals& marginals, const TrainConfig& config, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const auto& shape = state.params.shape;
  std::vector<TrainingExample> examples;
  examples.reserve(batch.size());
  for (const auto& item : batch) {
    TrainingExample ex;
    ex.t = static_cast<int>(rng.uniform_int(1, schedule.steps));
    ex.cond = drop_conditions(item.cond, config.epsilon_dropout, rng);
    ex.noisy = apply_noise(encode_onehot(item.cell, shape.num_ops, shape.num_edge_types), ex.t, schedule, marginals, rng);
    ex.clean = item.cell;
    examples.push_back(std::move(ex));
  }
  GradResult g;
  try {
    g = grad(state.params, examples, config.lambda_edge, &rng);
  } catch (const std::domain_error& e) {
    std::ostringstream msg;
    msg << "training step " << state.step << ": " << e.what();
    for (std::size_t s = 0; s < examples.size(); ++s) {
      msg << "\n  sample " << s << ": t=" << examples[s].t << " cell=" << cell_to_json(examples[s].clean).dump();
    }
    throw std::domain_error(msg.str());
  }
  adamw_update(state, g.grads, config);
  state.loss_history.push_back(g.mean_loss);
  return g.mean_loss;
}

std::vector<DatasetEntry> dataset_from_benchmark(const BenchmarkTable& table) {
  std::vector<DatasetEntry> out;
  out.reserve(table.size());
  for (const auto& r : table.records()) {
    DatasetEntry e{r.cell, {{"val_acc", r.val_acc}, {"test_acc", r.test_acc}}};
    for (const auto& [device, ms] : r.latency) e.metrics["latency:" + device] = ms;
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

double metric_of(const DatasetEntry& e, const std::string& metric, std::size_t index) {
  const auto it = e.metrics.find(metric);
  if (it == e.metrics.end()) {
    throw std::invalid_argument("dataset entry " + std::to_string(index) + " has no metric '" + metric + "'");
  }
  return it->second;
}

nlohmann::json row_json(const RowVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

RowVector row_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const RowVector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

ConditionSchema calibrate_schema(ConditionSchema schema, const std::vector<DatasetEntry>& dataset) {
  for (auto& c : schema.conditions) {
    if (c.percentiles.empty()) continue;
    std::vector<double> values;
    values.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) values.push_back(metric_of(dataset[i], c.metric, i));
    c.thresholds = calibrate_splits(std::move(values), c.percentiles);
  }
  schema.check();
  return schema;
}

nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [n, p] : m.node_count_dist) counts[std::to_string(n)] = p;
  return {{"format", "dinas-manifest/1"},
          {"space", space_to_json(m.space)},
          {"schema", schema_to_json(m.schema)},
          {"schema_hash", m.schema.hash()},
          {"T", m.steps},
          {"s", m.schedule_offset},
          {"mX", row_json(m.marginals.nodes)},
          {"mE", row_json(m.marginals.edges)},
          {"node_count_dist", counts},
          {"train_config", train_config_to_json(m.train)},
          {"model_config", config_to_json(m.model)},
          {"final_loss", m.final_loss},
          {"num_training_cells", m.num_training_cells}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "dinas-manifest/1") throw std::runtime_error("not a dinas run manifest");
  RunManifest m;
  m.space = space_from_json(j.at("space"));
  m.schema = schema_from_json(j.at("schema"));
  m.steps = j.at("T").get<int>();
  m.schedule_offset = j.at("s").get<double>();
  m.marginals.nodes = row_from_json(j.at("mX"));
  m.marginals.edges = row_from_json(j.at("mE"));
  m.marginals.check();
  for (const auto& [n, p] : j.at("node_count_dist").items()) m.node_count_dist[std::stoi(n)] = p.get<double>();
  m.train = train_config_from_json(j.at("train_config"));
  m.model = denoiser_config_from_json(j.at("model_config"));
  m.final_loss = j.value("final_loss", 0.0);
  m.num_training_cells = j.value("num_training_cells", 0L);
  if (j.contains("schema_hash") && j.at("schema_hash").get<std::string>() != m.schema.hash()) {
    throw std::runtime_error("manifest schema hash does not match its schema");
  }
  return m;
}

TrainResult train_loop(const std::vector<DatasetEntry>& dataset, const SearchSpaceSpec& space,
                       const ConditionSchema& schema, const DenoiserConfig& model, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
  if (dataset.empty()) throw std::invalid_argument("train_loop: empty dataset");
  config.check();
  model.check();
  space.check();

  TrainResult result;
  RunManifest& man = result.manifest;
  man.space = space;
  man.schema = calibrate_schema(schema, dataset);
  man.steps = config.steps;
  man.schedule_offset = config.schedule_offset;
  man.train = config;
  man.model = model;
  man.num_training_cells = static_cast<long>(dataset.size());

  std::vector<LabeledCell> labeled;
  std::vector<CellGraph> cells;
  labeled.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& e = dataset[i];
    const auto report = validate_cell(e.cell, space);
    if (!report.is_valid()) {
      throw std::invalid_argument("dataset entry " + std::to_string(i) + " is not a valid cell: " +
                                  std::string(to_string(report.violations.front())));
    }
    ConditionVector cond;
    for (const auto& c : man.schema.conditions) cond.classes.push_back(discretize(metric_of(e, c.metric, i), c));
    labeled.push_back({e.cell, std::move(cond)});
    cells.push_back(e.cell);
    man.node_count_dist[e.cell.num_nodes()] += 1.0;
  }
  for (auto& [n, p] : man.node_count_dist) p /= static_cast<double>(dataset.size());
  man.marginals = Marginals::from_cells(cells, space.num_ops(), space.num_edge_types());
  const auto schedule = man.schedule();

  ModelShape shape{space.num_ops(), space.num_edge_types(), {}, config.steps};
  for (const auto& c : man.schema.conditions) shape.condition_classes.push_back(c.num_classes);

  Rng rng(config.seed);
  result.state = TrainState::start(DenoiserParams::init(model, shape, rng));

  std::vector<std::size_t> order(labeled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<LabeledCell> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    double epoch_total = 0.0;
    int epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) batch.push_back(labeled[order[k]]);
      const double l = train_step(result.state, batch, schedule, man.marginals, config, rng);
      result.log.push_back({result.state.step, epoch, l});
      epoch_total += l;
      ++epoch_steps;
    }
    if (on_epoch) on_epoch(epoch, epoch_total / epoch_steps);
  }
  man.final_loss = result.state.loss_history.back();
  return result;
}

void save_run(const std::filesystem::path& dir, const TrainResult& result, const std::vector<DatasetEntry>& dataset) {
  std::filesystem::create_directories(dir);
  io::write_json(dir / "checkpoint.json", checkpoint_to_json(result.state.params, result.manifest.schema.hash()));
  io::write_json(dir / "manifest.json", manifest_to_json(result.manifest));
  std::ostringstream csv;
  csv.precision(17);
  csv << "step,epoch,loss\n";
  for (const auto& row : result.log) csv << row.step << ',' << row.epoch << ',' << row.loss << '\n';
  io::write_atomic(dir / "train_log.csv", csv.str());
  std::string lines;
  for (const auto& e : dataset) {
    auto j = cell_to_json(e.cell);
    j["metrics"] = e.metrics;
    lines += j.dump() + "\n";
  }
  io::write_atomic(dir / "training_set.jsonl", lines);
}

LoadedRun load_run(const std::filesystem::path& dir) {
  LoadedRun run;
  run.manifest = manifest_from_json(io::read_json(dir / "manifest.json"));
  run.params = checkpoint_from_json(io::read_json(dir / "checkpoint.json"), run.manifest.schema.hash());
  if (run.params.shape.diffusion_steps != run.manifest.steps) {
    throw std::runtime_error("checkpoint step count does not match the manifest");
  }
  return run;
}

}  // namespace dinas
