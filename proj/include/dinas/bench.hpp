// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "dinas/cell_graph.hpp"

namespace dinas {

struct BenchmarkRecord {
  CanonicalKey key;
  CellGraph cell;
  double val_acc = 0.0;   // percent
  double test_acc = 0.0;  // percent
  std::map<std::string, double> latency;  // device -> milliseconds

  /// "val_acc", "test_acc" or "latency:<device>".
  double metric(const std::string& name) const;
  friend bool operator==(const BenchmarkRecord& a, const BenchmarkRecord& b) {
    return a.key == b.key && a.val_acc == b.val_acc && a.test_acc == b.test_acc && a.latency == b.latency;
  }
};

nlohmann::json record_to_json(const BenchmarkRecord& r);

enum class BenchmarkProvenance { kSynthetic, kLoaded };

/// Tabular benchmark: exact lookup by canonical key, with a query counter
/// that every lookup through query() increments, hit or miss.
class BenchmarkTable {
 public:
  BenchmarkTable() = default;
  BenchmarkTable(const BenchmarkTable& other);
  BenchmarkTable& operator=(const BenchmarkTable& other);

  /// Throws std::invalid_argument on a duplicate key.
  void insert(BenchmarkRecord record);

  /// Counted retrieval; nullptr signals "not in the benchmark".
  const BenchmarkRecord* query(const CellGraph& cell) const;
  /// Uncounted lookup for building datasets and reports.
  const BenchmarkRecord* peek(const CanonicalKey& key) const;

  long query_count() const { return queries_.load(); }
  void reset_query_count() { queries_.store(0); }

  std::size_t size() const { return records_.size(); }
  /// Records in insertion order.
  const std::vector<BenchmarkRecord>& records() const { return records_; }
  BenchmarkProvenance provenance = BenchmarkProvenance::kLoaded;

  void save(const std::filesystem::path& path) const;
  /// JSON-lines rows {"x","e","val_acc","test_acc","latency"}; malformed rows
  /// and duplicates raise std::runtime_error naming the line.
  static BenchmarkTable load(const std::filesystem::path& path);

  friend bool operator==(const BenchmarkTable& a, const BenchmarkTable& b) { return a.records_ == b.records_; }

 private:
  std::vector<BenchmarkRecord> records_;
  std::map<std::string, std::size_t> index_;
  mutable std::atomic<long> queries_{0};
};

/// Parameters of the synthetic benchmark over an enumerable space.
struct SyntheticSpec {
  std::vector<double> op_weights;  // per op index
  double depth_bonus = 0.0;
  std::uint64_t noise_seed = 0;
  std::map<std::string, std::vector<double>> latency_table;  // device -> per-op milliseconds

  static SyntheticSpec from_json(const nlohmann::json& j, const SearchSpaceSpec& space);
};

/// Deterministic pseudo-uniform value in [lo, hi] derived from (key, seed, stream).
double hashed_uniform(const CanonicalKey& key, std::uint64_t seed, std::uint64_t stream, double lo, double hi);

/// val_acc = clamp(50 + sum_i w[op_i] + depth_bonus * longest_path + eta, 0, 100),
/// test_acc = clamp(val_acc + eta', 0, 100), latency = sum_i lat[device][op_i],
/// with eta in [-1, 1] and eta' in [-0.5, 0.5] hashed from the cell key.
BenchmarkRecord synth_record(const CellGraph& cell, const SyntheticSpec& spec);
BenchmarkTable synth_benchmark(const SearchSpaceSpec& space, const SyntheticSpec& spec);

}  // namespace dinas
