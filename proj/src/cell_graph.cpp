// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#include "dinas/cell_graph.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace dinas {

CellGraph CellGraph::with_ops(std::vector<int> node_ops) {
  const auto n = static_cast<Eigen::Index>(node_ops.size());
  return CellGraph(std::move(node_ops), IndexMatrix::Zero(n, n));
}

CellGraph& CellGraph::connect(int from, int to, int category) {
  edges(from, to) = category;
  return *this;
}

std::uint64_t CellTemplate::size() const {
  std::uint64_t total = 1;
  for (const auto& s : node_slots) total *= s.choices.size();
  for (const auto& s : edge_slots) total *= s.choices.size();
  return total;
}

bool CellTemplate::matches(const CellGraph& cell) const {
  if (cell.num_nodes() != base.num_nodes()) return false;
  CellGraph masked = cell;
  for (const auto& s : node_slots) {
    if (std::find(s.choices.begin(), s.choices.end(), cell.ops[s.node]) == s.choices.end()) return false;
    masked.ops[s.node] = base.ops[s.node];
  }
  for (const auto& s : edge_slots) {
    const int v = cell.edges(s.from, s.to);
    if (std::find(s.choices.begin(), s.choices.end(), v) == s.choices.end()) return false;
    masked.edges(s.from, s.to) = base.edges(s.from, s.to);
  }
  return masked == base;
}

int SearchSpaceSpec::op_index(std::string_view label) const {
  const auto it = std::find(op_vocab.begin(), op_vocab.end(), label);
  if (it == op_vocab.end()) {
    throw std::invalid_argument("space '" + name + "' has no op '" + std::string(label) + "'");
  }
  return static_cast<int>(it - op_vocab.begin());
}

int SearchSpaceSpec::input_op() const { return op_index(kInput); }
int SearchSpaceSpec::output_op() const { return op_index(kOutput); }

void SearchSpaceSpec::check() const {
  if (n_nodes < 3) throw std::invalid_argument("space '" + name + "': n_nodes must be >= 3");
  if (std::count(op_vocab.begin(), op_vocab.end(), kInput) != 1 ||
      std::count(op_vocab.begin(), op_vocab.end(), kOutput) != 1) {
    throw std::invalid_argument("space '" + name + "': op_vocab needs exactly one input and one output label");
  }
  if (edge_vocab.size() < 2 || edge_vocab.front() != "absent") {
    throw std::invalid_argument("space '" + name + "': edge_vocab must start with 'absent' and have >= 2 entries");
  }
  if (max_edges && *max_edges < 0) throw std::invalid_argument("space '" + name + "': negative max_edges");
  if (cell_template) {
    const auto& t = *cell_template;
    if (t.base.num_nodes() != n_nodes) throw std::invalid_argument("space '" + name + "': template size mismatch");
    for (const auto& s : t.node_slots) {
      if (s.node < 0 || s.node >= n_nodes || s.choices.empty()) {
        throw std::invalid_argument("space '" + name + "': bad node slot");
      }
      for (int c : s.choices) {
        if (c < 0 || c >= num_ops()) throw std::invalid_argument("space '" + name + "': node slot choice out of vocab");
      }
    }
    for (const auto& s : t.edge_slots) {
      if (s.from < 0 || s.to >= n_nodes || s.from >= s.to || s.choices.empty()) {
        throw std::invalid_argument("space '" + name + "': bad edge slot");
      }
      for (int c : s.choices) {
        if (c < 0 || c >= num_edge_types()) throw std::invalid_argument("space '" + name + "': edge slot choice out of vocab");
      }
    }
  }
}

std::string_view to_string(Violation v) {
  switch (v) {
    case Violation::kCycle: return "CYCLE";
    case Violation::kDisconnected: return "DISCONNECTED";
    case Violation::kBadInputPos: return "BAD_INPUT_POS";
    case Violation::kBadOutputPos: return "BAD_OUTPUT_POS";
    case Violation::kDanglingNode: return "DANGLING_NODE";
    case Violation::kEdgeCountExceeded: return "EDGE_COUNT_EXCEEDED";
    case Violation::kBackwardEdge: return "BACKWARD_EDGE";
    case Violation::kTemplateMismatch: return "TEMPLATE_MISMATCH";
  }
  return "UNKNOWN";
}

bool ValidityReport::has(Violation v) const {
  return std::find(violations.begin(), violations.end(), v) != violations.end();
}

namespace {

void check_dimensions(const CellGraph& cell, const SearchSpaceSpec& space) {
  const int n = cell.num_nodes();
  if (n != space.n_nodes || cell.edges.rows() != n || cell.edges.cols() != n) {
    std::ostringstream msg;
    msg << "cell has " << n << " nodes and a " << cell.edges.rows() << "x" << cell.edges.cols()
        << " edge matrix; space '" << space.name << "' expects " << space.n_nodes;
    throw std::invalid_argument(msg.str());
  }
  for (int i = 0; i < n; ++i) {
    if (cell.ops[i] < 0 || cell.ops[i] >= space.num_ops()) {
      throw std::invalid_argument("op index out of vocabulary at node " + std::to_string(i));
    }
    for (int j = 0; j < n; ++j) {
      if (cell.edges(i, j) < 0 || cell.edges(i, j) >= space.num_edge_types()) {
        throw std::invalid_argument("edge category out of vocabulary at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
      }
    }
  }
}

bool has_cycle(const CellGraph& cell) {
  const int n = cell.num_nodes();
  std::vector<int> indegree(n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (cell.edges(i, j) != 0) ++indegree[j];
  std::vector<int> ready;
  for (int i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push_back(i);
  int seen = 0;
  while (!ready.empty()) {
    const int u = ready.back();
    ready.pop_back();
    ++seen;
    for (int v = 0; v < n; ++v)
      if (cell.edges(u, v) != 0 && --indegree[v] == 0) ready.push_back(v);
  }
  return seen != n;
}

std::vector<bool> reach(const CellGraph& cell, int start, bool forward) {
  const int n = cell.num_nodes();
  std::vector<bool> seen(n, false);
  std::vector<int> stack{start};
  seen[start] = true;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < n; ++v) {
      const bool linked = forward ? cell.edges(u, v) != 0 : cell.edges(v, u) != 0;
      if (linked && !seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

}  // namespace

ValidityReport validate_cell(const CellGraph& cell, const SearchSpaceSpec& space) {
  check_dimensions(cell, space);
  ValidityReport report;
  auto flag = [&](Violation v) {
    if (!report.has(v)) report.violations.push_back(v);
  };
  const int n = cell.num_nodes();
  const int in_op = space.input_op();
  const int out_op = space.output_op();

  bool backward = false;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j)
      if (cell.edges(i, j) != 0) backward = true;
  const bool cyclic = backward && has_cycle(cell);
  if (cyclic) flag(Violation::kCycle);
  if (backward && !cyclic && space.rules.forward_edges_only) flag(Violation::kBackwardEdge);

  if (space.rules.input_first) {
    if (cell.ops[0] != in_op) flag(Violation::kBadInputPos);
    for (int i = 1; i < n; ++i)
      if (cell.ops[i] == in_op) flag(Violation::kBadInputPos);
  }
  if (space.rules.output_last) {
    if (cell.ops[n - 1] != out_op) flag(Violation::kBadOutputPos);
    for (int i = 0; i < n - 1; ++i)
      if (cell.ops[i] == out_op) flag(Violation::kBadOutputPos);
  }

  // Connectivity is judged between the first and last node; positional
  // violations above already cover mislabelled endpoints.
  const int source = 0;
  const int sink = n - 1;
  if (!cyclic) {
    const auto from_source = reach(cell, source, true);
    const auto to_sink = reach(cell, sink, false);
    const bool connected = from_source[sink];
    if (!connected) flag(Violation::kDisconnected);
    for (int v = 1; v < n - 1; ++v) {
      const bool incident = (cell.edges.row(v).array() != 0).any() || (cell.edges.col(v).array() != 0).any();
      const bool on_path = from_source[v] && to_sink[v];
      if (incident && !on_path) flag(Violation::kDanglingNode);
      // An isolated node inside a disconnected cell is part of the
      // disconnection and is not reported separately.
      if (!incident && connected && !space.rules.allow_isolated) flag(Violation::kDanglingNode);
    }
  }

  if (space.max_edges && cell.num_edges() > *space.max_edges) flag(Violation::kEdgeCountExceeded);
  if (space.cell_template && !space.cell_template->matches(cell)) flag(Violation::kTemplateMismatch);
  return report;
}

int longest_path_length(const CellGraph& cell) {
  const int n = cell.num_nodes();
  // Nodes are topologically ordered when all edges point forward.
  std::vector<int> depth(n, 0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < j; ++i)
      if (cell.edges(i, j) != 0) depth[j] = std::max(depth[j], depth[i] + 1);
  return n == 0 ? 0 : *std::max_element(depth.begin(), depth.end());
}

nlohmann::json cell_to_json(const CellGraph& cell) {
  nlohmann::json e = nlohmann::json::array();
  for (Eigen::Index i = 0; i < cell.edges.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < cell.edges.cols(); ++j) row.push_back(cell.edges(i, j));
    e.push_back(std::move(row));
  }
  return nlohmann::json{{"x", cell.ops}, {"e", std::move(e)}};
}

CellGraph cell_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("x") || !j.contains("e")) {
    throw std::invalid_argument("cell JSON needs 'x' and 'e' fields");
  }
  const auto ops = j.at("x").get<std::vector<int>>();
  const auto rows = j.at("e").get<std::vector<std::vector<int>>>();
  const auto n = static_cast<Eigen::Index>(ops.size());
  if (static_cast<Eigen::Index>(rows.size()) != n) throw std::invalid_argument("cell JSON: 'e' must be n x n");
  IndexMatrix edges(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != n) throw std::invalid_argument("cell JSON: 'e' must be n x n");
    for (Eigen::Index k = 0; k < n; ++k) edges(i, k) = rows[i][k];
  }
  return CellGraph(ops, std::move(edges));
}

CanonicalKey canonical_key(const CellGraph& cell) { return CanonicalKey{cell_to_json(cell).dump()}; }

OneHotCell encode_onehot(const CellGraph& cell, int num_ops, int num_edge_types) {
  const int n = cell.num_nodes();
  OneHotCell out{Matrix::Zero(n, num_ops), Matrix::Zero(n * n, num_edge_types)};
  for (int i = 0; i < n; ++i) {
    if (cell.ops[i] < 0 || cell.ops[i] >= num_ops) {
      throw std::invalid_argument("encode_onehot: op index out of vocabulary at node " + std::to_string(i));
    }
    out.nodes(i, cell.ops[i]) = 1.0;
    for (int j = 0; j < n; ++j) {
      const int c = cell.edges(i, j);
      if (c < 0 || c >= num_edge_types) {
        throw std::invalid_argument("encode_onehot: edge category out of vocabulary");
      }
      out.edges(pair_row(i, j, n), c) = 1.0;
    }
  }
  return out;
}

OneHotCell encode_onehot(const CellGraph& cell, const SearchSpaceSpec& space) {
  if (cell.num_nodes() != space.n_nodes) throw std::invalid_argument("encode_onehot: node count mismatch");
  return encode_onehot(cell, space.num_ops(), space.num_edge_types());
}

CellGraph decode_onehot(const OneHotCell& onehot) {
  const int n = onehot.num_nodes();
  CellGraph cell = CellGraph::with_ops(std::vector<int>(n, 0));
  Eigen::Index arg;
  for (int i = 0; i < n; ++i) {
    onehot.nodes.row(i).maxCoeff(&arg);
    cell.ops[i] = static_cast<int>(arg);
    for (int j = 0; j < n; ++j) {
      onehot.edges.row(pair_row(i, j, n)).maxCoeff(&arg);
      cell.edges(i, j) = static_cast<int>(arg);
    }
  }
  return cell;
}

CellEnumerator::CellEnumerator(const SearchSpaceSpec& space) {
  if (!space.cell_template) throw std::invalid_argument("space '" + space.name + "' is not enumerable");
  tmpl_ = &*space.cell_template;
  digits_.assign(tmpl_->node_slots.size() + tmpl_->edge_slots.size(), 0);
  total_ = tmpl_->size();
  done_ = total_ == 0;
}

std::optional<CellGraph> CellEnumerator::next() {
  if (done_) return std::nullopt;
  CellGraph cell = tmpl_->base;
  cell.provenance = Provenance::kEnumerated;
  const std::size_t n_node_slots = tmpl_->node_slots.size();
  for (std::size_t s = 0; s < digits_.size(); ++s) {
    if (s < n_node_slots) {
      const auto& slot = tmpl_->node_slots[s];
      cell.ops[slot.node] = slot.choices[digits_[s]];
    } else {
      const auto& slot = tmpl_->edge_slots[s - n_node_slots];
      cell.edges(slot.from, slot.to) = slot.choices[digits_[s]];
    }
  }
  // odometer increment, last slot fastest
  std::size_t s = digits_.size();
  while (true) {
    if (s == 0) {
      done_ = true;
      break;
    }
    --s;
    const std::size_t radix = s < n_node_slots ? tmpl_->node_slots[s].choices.size()
                                               : tmpl_->edge_slots[s - n_node_slots].choices.size();
    if (++digits_[s] < radix) break;
    digits_[s] = 0;
  }
  return cell;
}

std::vector<CellGraph> enumerate_space(const SearchSpaceSpec& space) {
  CellEnumerator it(space);
  std::vector<CellGraph> cells;
  cells.reserve(it.total());
  while (auto cell = it.next()) cells.push_back(std::move(*cell));
  return cells;
}

namespace spaces {

namespace {

std::vector<int> range(int lo, int hi) {
  std::vector<int> v;
  for (int k = lo; k < hi; ++k) v.push_back(k);
  return v;
}

}  // namespace

SearchSpaceSpec nb101() {
  SearchSpaceSpec s;
  s.name = "nb101";
  s.n_nodes = 7;
  s.op_vocab = {"input", "conv1x1-bn-relu", "conv3x3-bn-relu", "maxpool3x3", "output"};
  s.edge_vocab = {"absent", "present"};
  s.max_edges = 9;
  return s;
}

SearchSpaceSpec nb201() {
  SearchSpaceSpec s;
  s.name = "nb201";
  s.n_nodes = 8;
  s.op_vocab = {"input", "nor_conv_1x1", "nor_conv_3x3", "avg_pool_3x3", "skip_connect", "none", "output"};
  s.edge_vocab = {"absent", "present"};
  // Node form of the four-state cell: ops of edges 0->1, 0->2, 0->3, 1->2,
  // 2->3, 1->3 become nodes 1..6.
  CellGraph base = CellGraph::with_ops({0, 1, 1, 1, 1, 1, 1, 6});
  base.connect(0, 1).connect(0, 2).connect(0, 3);
  base.connect(1, 4).connect(1, 6);
  base.connect(2, 5).connect(4, 5);
  base.connect(3, 7).connect(5, 7).connect(6, 7);
  CellTemplate t{base, {}, {}};
  for (int node = 1; node <= 6; ++node) t.node_slots.push_back({node, range(1, 6)});
  s.cell_template = std::move(t);
  return s;
}

SearchSpaceSpec desk() {
  SearchSpaceSpec s;
  s.name = "desk";
  s.n_nodes = 6;
  s.op_vocab = {"input", "conv3x3", "conv1x1", "maxpool3x3", "output"};
  s.edge_vocab = {"absent", "present"};
  CellGraph base = CellGraph::with_ops({0, 1, 1, 1, 1, 4});
  for (int i = 0; i < 5; ++i) base.connect(i, i + 1);
  CellTemplate t{base, {}, {}};
  for (int node = 1; node <= 4; ++node) t.node_slots.push_back({node, range(1, 4)});
  s.cell_template = std::move(t);
  return s;
}

SearchSpaceSpec desk_dag() {
  SearchSpaceSpec s;
  s.name = "desk-dag";
  s.n_nodes = 6;
  s.op_vocab = {"input", "conv3x3", "conv1x1", "maxpool3x3", "skip", "output"};
  s.edge_vocab = {"absent", "present"};
  CellGraph base = CellGraph::with_ops({0, 1, 1, 1, 1, 5});
  for (int node = 1; node <= 4; ++node) base.connect(0, node).connect(node, 5);
  CellTemplate t{base, {}, {}};
  for (int node = 1; node <= 4; ++node) t.node_slots.push_back({node, range(1, 5)});
  for (int node = 1; node <= 3; ++node) t.edge_slots.push_back({node, node + 1, {0, 1}});
  s.cell_template = std::move(t);
  return s;
}

SearchSpaceSpec by_name(std::string_view name) {
  if (name == "nb101") return nb101();
  if (name == "nb201") return nb201();
  if (name == "desk") return desk();
  if (name == "desk-dag") return desk_dag();
  throw std::invalid_argument("unknown space preset '" + std::string(name) +
                              "' (known: nb101, nb201, desk, desk-dag)");
}

}  // namespace spaces

namespace {

nlohmann::json index_matrix_to_json(const IndexMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<int> row(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[j] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

nlohmann::json space_to_json(const SearchSpaceSpec& space) {
  nlohmann::json j{
      {"name", space.name},
      {"n_nodes", space.n_nodes},
      {"op_vocab", space.op_vocab},
      {"edge_vocab", space.edge_vocab},
      {"max_edges", space.max_edges ? nlohmann::json(*space.max_edges) : nlohmann::json(nullptr)},
      {"rules",
       {{"input_first", space.rules.input_first},
        {"output_last", space.rules.output_last},
        {"forward_edges_only", space.rules.forward_edges_only},
        {"allow_isolated", space.rules.allow_isolated}}},
  };
  if (space.cell_template) {
    const auto& t = *space.cell_template;
    nlohmann::json node_slots = nlohmann::json::array();
    for (const auto& s : t.node_slots) node_slots.push_back({{"node", s.node}, {"choices", s.choices}});
    nlohmann::json edge_slots = nlohmann::json::array();
    for (const auto& s : t.edge_slots) {
      edge_slots.push_back({{"from", s.from}, {"to", s.to}, {"choices", s.choices}});
    }
    j["template"] = {{"x", t.base.ops},
                     {"e", index_matrix_to_json(t.base.edges)},
                     {"node_slots", node_slots},
                     {"edge_slots", edge_slots}};
  } else {
    j["template"] = nullptr;
  }
  return j;
}

SearchSpaceSpec space_from_json(const nlohmann::json& j) {
  if (j.is_string()) return spaces::by_name(j.get<std::string>());
  SearchSpaceSpec s;
  s.name = j.at("name").get<std::string>();
  s.n_nodes = j.at("n_nodes").get<int>();
  s.op_vocab = j.at("op_vocab").get<std::vector<std::string>>();
  s.edge_vocab = j.at("edge_vocab").get<std::vector<std::string>>();
  if (j.contains("max_edges") && !j.at("max_edges").is_null()) s.max_edges = j.at("max_edges").get<int>();
  if (j.contains("rules")) {
    const auto& r = j.at("rules");
    s.rules.input_first = r.value("input_first", true);
    s.rules.output_last = r.value("output_last", true);
    s.rules.forward_edges_only = r.value("forward_edges_only", true);
    s.rules.allow_isolated = r.value("allow_isolated", false);
  }
  if (j.contains("template") && !j.at("template").is_null()) {
    const auto& t = j.at("template");
    CellTemplate tmpl;
    tmpl.base = cell_from_json(t);
    for (const auto& ns : t.at("node_slots")) {
      tmpl.node_slots.push_back({ns.at("node").get<int>(), ns.at("choices").get<std::vector<int>>()});
    }
    for (const auto& es : t.at("edge_slots")) {
      tmpl.edge_slots.push_back(
          {es.at("from").get<int>(), es.at("to").get<int>(), es.at("choices").get<std::vector<int>>()});
    }
    s.cell_template = std::move(tmpl);
  }
  s.check();
  return s;
}

}  // namespace dinas
