// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dinas/cell_graph.hpp"

namespace dinas::io {

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// One JSON value per non-empty line. Parse errors name the 1-based line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

std::vector<CellGraph> read_cells(const std::filesystem::path& path);
void write_cells(const std::filesystem::path& path, const std::vector<CellGraph>& cells);

/// $DINAS_RUN_DIR when set, otherwise ./runs.
std::filesystem::path default_run_root();

}  // namespace dinas::io
