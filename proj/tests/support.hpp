// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <sstream>
#include <string>

#include "dinas/cell_graph.hpp"
#include "dinas/denoiser.hpp"
#include "dinas/rng.hpp"

namespace testing {

inline dinas::DenoiserConfig tiny_config(int layers = 2, int hidden = 16) {
  dinas::DenoiserConfig c;
  c.n_layers = layers;
  c.hidden_dim = hidden;
  c.pe_dim = hidden;
  c.edge_dim = hidden;
  c.ffn_dim = 2 * hidden;
  c.n_heads = 4;
  return c;
}

// Random upper-triangular cell of size n; endpoints labelled input/output.
inline dinas::CellGraph random_cell(int n, int num_ops, int num_edge_types, dinas::Rng& rng) {
  std::vector<int> ops(n);
  for (int i = 0; i < n; ++i) ops[i] = static_cast<int>(rng.uniform_int(0, num_ops - 1));
  auto cell = dinas::CellGraph::with_ops(ops);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) cell.edges(i, j) = static_cast<int>(rng.uniform_int(0, num_edge_types - 1));
  return cell;
}

// Plain text form independent of the library's JSON keys.
inline std::string text_form(const dinas::CellGraph& c) {
  std::ostringstream s;
  for (int op : c.ops) s << op << ' ';
  s << '|';
  for (Eigen::Index i = 0; i < c.edges.size(); ++i) s << ' ' << c.edges.data()[i];
  return s.str();
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dinas_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
