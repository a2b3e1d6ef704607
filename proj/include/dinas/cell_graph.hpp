// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dinas/types.hpp"

namespace dinas {

using IndexMatrix = MatrixT<int>;

enum class Provenance { kUnspecified, kTraining, kGenerated, kEnumerated };

/// A cell DAG: one operation label per node plus an n x n matrix of edge
/// categories. Node order is the topological order; edge (i, j) with i < j
/// carries data from node i to node j and category 0 means "absent".
struct CellGraph {
  std::vector<int> ops;
  IndexMatrix edges;
  Provenance provenance = Provenance::kUnspecified;

  CellGraph() = default;
  CellGraph(std::vector<int> node_ops, IndexMatrix edge_matrix,
            Provenance tag = Provenance::kUnspecified)
      : ops(std::move(node_ops)), edges(std::move(edge_matrix)), provenance(tag) {}

  /// Cell with `ops` and no edges.
  static CellGraph with_ops(std::vector<int> node_ops);

  int num_nodes() const { return static_cast<int>(ops.size()); }
  int num_edges() const { return (edges.array() != 0).count(); }

  /// Sets edge (from, to) to `category` (1 = present for binary vocabularies).
  CellGraph& connect(int from, int to, int category = 1);

  // Provenance is metadata; equality is over the representation only.
  friend bool operator==(const CellGraph& a, const CellGraph& b) {
    return a.ops == b.ops && a.edges.rows() == b.edges.rows() &&
           a.edges.cols() == b.edges.cols() && a.edges == b.edges;
  }
};

struct StructuralRules {
  bool input_first = true;
  bool output_last = true;
  bool forward_edges_only = true;
  // Intermediate nodes without any edge are tolerated (variable effective size).
  bool allow_isolated = false;
};

struct NodeSlot {
  int node;
  std::vector<int> choices;
};

struct EdgeSlot {
  int from;
  int to;
  std::vector<int> choices;
};

/// Finite template: a fixed base cell plus slots whose values range over
/// explicit choice lists. Every cell of an enumerable space is one assignment.
struct CellTemplate {
  CellGraph base;
  std::vector<NodeSlot> node_slots;
  std::vector<EdgeSlot> edge_slots;

  std::uint64_t size() const;
  bool matches(const CellGraph& cell) const;
};

struct SearchSpaceSpec {
  std::string name;
  int n_nodes = 0;
  std::vector<std::string> op_vocab;
  std::vector<std::string> edge_vocab;
  std::optional<int> max_edges;
  StructuralRules rules;
  std::optional<CellTemplate> cell_template;

  static constexpr std::string_view kInput = "input";
  static constexpr std::string_view kOutput = "output";

  int num_ops() const { return static_cast<int>(op_vocab.size()); }
  int num_edge_types() const { return static_cast<int>(edge_vocab.size()); }
  int input_op() const;
  int output_op() const;
  int op_index(std::string_view label) const;
  bool enumerable() const { return cell_template.has_value(); }

  /// Throws std::invalid_argument when the vocabulary or template is malformed.
  void check() const;
};

enum class Violation {
  kCycle,
  kDisconnected,
  kBadInputPos,
  kBadOutputPos,
  kDanglingNode,
  kEdgeCountExceeded,
  kBackwardEdge,
  kTemplateMismatch,
};

std::string_view to_string(Violation v);

struct ValidityReport {
  std::vector<Violation> violations;
  bool is_valid() const { return violations.empty(); }
  bool has(Violation v) const;
};

/// Checks connectivity, structural rules, the edge budget and (for template
/// spaces) template conformance. Throws std::invalid_argument when the cell's
/// dimensions or indices do not fit the space; that is a caller bug, not an
/// invalid cell.
ValidityReport validate_cell(const CellGraph& cell, const SearchSpaceSpec& space);

/// Number of edges on the longest path of the DAG (0 for an edgeless cell).
int longest_path_length(const CellGraph& cell);

struct CanonicalKey {
  std::string key;
  friend bool operator==(const CanonicalKey&, const CanonicalKey&) = default;
  friend auto operator<=>(const CanonicalKey&, const CanonicalKey&) = default;
};

/// {"e":[[...]],"x":[...]} with sorted keys and no whitespace.
nlohmann::json cell_to_json(const CellGraph& cell);
CellGraph cell_from_json(const nlohmann::json& j);
CanonicalKey canonical_key(const CellGraph& cell);

struct OneHotCell {
  Matrix nodes;  // n x |op_vocab|
  Matrix edges;  // (n*n) x |edge_vocab|, row i*n + j
  int num_nodes() const { return static_cast<int>(nodes.rows()); }
};

OneHotCell encode_onehot(const CellGraph& cell, const SearchSpaceSpec& space);
OneHotCell encode_onehot(const CellGraph& cell, int num_ops, int num_edge_types);
/// Row-wise argmax.
CellGraph decode_onehot(const OneHotCell& onehot);

/// Streams every cell of an enumerable space exactly once, in odometer order
/// over the template slots (last slot fastest).
class CellEnumerator {
 public:
  explicit CellEnumerator(const SearchSpaceSpec& space);
  std::optional<CellGraph> next();
  std::uint64_t total() const { return total_; }

 private:
  const CellTemplate* tmpl_;
  std::vector<std::size_t> digits_;
  std::uint64_t total_ = 0;
  bool done_ = false;
};

std::vector<CellGraph> enumerate_space(const SearchSpaceSpec& space);

namespace spaces {

/// NB101-style: 7 nodes, three intermediate ops, at most 9 edges. Not enumerable.
SearchSpaceSpec nb101();
/// NB201 cell converted to node form: 8 nodes, six op slots over five ops on a
/// fixed skeleton (15,625 cells).
SearchSpaceSpec nb201();
/// Desk-scale chain: input, four op slots over three ops, output (81 cells).
SearchSpaceSpec desk();
/// Desk-scale DAG: four op nodes fed by the input and feeding the output,
/// four ops per node and three optional chain edges (2,048 cells).
SearchSpaceSpec desk_dag();

/// Looks up a preset by name; throws std::invalid_argument listing the presets.
SearchSpaceSpec by_name(std::string_view name);

}  // namespace spaces

nlohmann::json space_to_json(const SearchSpaceSpec& space);
SearchSpaceSpec space_from_json(const nlohmann::json& j);

}  // namespace dinas
