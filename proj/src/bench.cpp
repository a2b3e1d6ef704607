// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#include "dinas/bench.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "dinas/io.hpp"
#include "dinas/rng.hpp"

namespace dinas {

double BenchmarkRecord::metric(const std::string& name) const {
  if (name == "val_acc") return val_acc;
  if (name == "test_acc") return test_acc;
  if (name.rfind("latency:", 0) == 0) {
    const auto device = name.substr(8);
    const auto it = latency.find(device);
    if (it == latency.end()) throw std::invalid_argument("record has no latency for device '" + device + "'");
    return it->second;
  }
  throw std::invalid_argument("unknown metric '" + name + "'");
}

nlohmann::json record_to_json(const BenchmarkRecord& r) {
  nlohmann::json j = cell_to_json(r.cell);
  j["val_acc"] = r.val_acc;
  j["test_acc"] = r.test_acc;
  j["latency"] = r.latency;
  return j;
}

BenchmarkTable::BenchmarkTable(const BenchmarkTable& other)
    : provenance(other.provenance), records_(other.records_), index_(other.index_), queries_(other.queries_.load()) {}

BenchmarkTable& BenchmarkTable::operator=(const BenchmarkTable& other) {
  records_ = other.records_;
  index_ = other.index_;
  provenance = other.provenance;
  queries_.store(other.queries_.load());
  return *this;
}

void BenchmarkTable::insert(BenchmarkRecord record) {
  if (record.val_acc < 0.0 || record.val_acc > 100.0 || record.test_acc < 0.0 || record.test_acc > 100.0) {
    throw std::invalid_argument("benchmark accuracies must lie in [0, 100]");
  }
  for (const auto& [device, ms] : record.latency) {
    if (!(ms > 0.0)) throw std::invalid_argument("latency for '" + device + "' must be positive");
  }
  const auto [it, inserted] = index_.emplace(record.key.key, records_.size());
  if (!inserted) throw std::invalid_argument("duplicate benchmark cell " + record.key.key);
  records_.push_back(std::move(record));
}

const BenchmarkRecord* BenchmarkTable::query(const CellGraph& cell) const {
  queries_.fetch_add(1);
  return peek(canonical_key(cell));
}

const BenchmarkRecord* BenchmarkTable::peek(const CanonicalKey& key) const {
  const auto it = index_.find(key.key);
  return it == index_.end() ? nullptr : &records_[it->second];
}

void BenchmarkTable::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& r : records_) out += record_to_json(r).dump() + "\n";
  io::write_atomic(path, out);
}

BenchmarkTable BenchmarkTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open benchmark " + path.string());
  BenchmarkTable table;
  table.provenance = BenchmarkProvenance::kLoaded;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    BenchmarkRecord r;
    try {
      const auto j = nlohmann::json::parse(line);
      r.cell = cell_from_json(j);
      r.key = canonical_key(r.cell);
      r.val_acc = j.at("val_acc").get<double>();
      r.test_acc = j.at("test_acc").get<double>();
      if (j.contains("latency") && !j.at("latency").is_null()) {
        r.latency = j.at("latency").get<std::map<std::string, double>>();
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(where + "malformed row: " + e.what());
    }
    try {
      table.insert(std::move(r));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(where + e.what());
    }
  }
  return table;
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j, const SearchSpaceSpec& space) {
  SyntheticSpec s;
  s.op_weights.assign(space.num_ops(), 0.0);
  if (j.contains("op_weights")) {
    for (const auto& [label, w] : j.at("op_weights").items()) s.op_weights[space.op_index(label)] = w.get<double>();
  }
  s.depth_bonus = j.value("depth_bonus", 0.0);
  s.noise_seed = j.value("noise_seed", std::uint64_t{0});
  if (j.contains("latency")) {
    for (const auto& [device, table] : j.at("latency").items()) {
      std::vector<double> per_op(space.num_ops(), 0.0);
      for (const auto& [label, ms] : table.items()) per_op[space.op_index(label)] = ms.get<double>();
      s.latency_table[device] = std::move(per_op);
    }
  }
  return s;
}

double hashed_uniform(const CanonicalKey& key, std::uint64_t seed, std::uint64_t stream, double lo, double hi) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : key.key) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  const std::uint64_t mixed = splitmix64(h ^ splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
  const double unit = static_cast<double>(mixed >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

BenchmarkRecord synth_record(const CellGraph& cell, const SyntheticSpec& spec) {
  BenchmarkRecord r;
  r.cell = cell;
  r.key = canonical_key(cell);
  double score = 50.0;
  for (int op : cell.ops) score += spec.op_weights.at(op);
  score += spec.depth_bonus * longest_path_length(cell);
  score += hashed_uniform(r.key, spec.noise_seed, 0, -1.0, 1.0);
  r.val_acc = std::clamp(score, 0.0, 100.0);
  r.test_acc = std::clamp(r.val_acc + hashed_uniform(r.key, spec.noise_seed, 1, -0.5, 0.5), 0.0, 100.0);
  for (const auto& [device, per_op] : spec.latency_table) {
    double ms = 0.0;
    for (int op : cell.ops) ms += per_op.at(op);
    r.latency[device] = ms;
  }
  return r;
}

BenchmarkTable synth_benchmark(const SearchSpaceSpec& space, const SyntheticSpec& spec) {
  if (static_cast<int>(spec.op_weights.size()) != space.num_ops()) {
    throw std::invalid_argument("synthetic benchmark needs one weight per op");
  }
  BenchmarkTable table;
  table.provenance = BenchmarkProvenance::kSynthetic;
  CellEnumerator it(space);
  while (auto cell = it.next()) table.insert(synth_record(*cell, spec));
  return table;
}

}  // namespace dinas
