// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#include <stdexcept>

#include "doctest.h"

#include "dinas/harness.hpp"
#include "dinas/io.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dinas;

namespace {

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "space": "desk",
    "synthetic": {"op_weights": {"conv3x3": 2.0, "conv1x1": 1.0, "maxpool3x3": -1.0}, "depth_bonus": 0.0,
                  "noise_seed": 3},
    "schema": {"conditions": [{"name": "acc", "metric": "val_acc", "classes": 2, "percentiles": [80]}]},
    "model": {"n_layers": 1, "hidden_dim": 8, "n_heads": 2},
    "train": {"epochs": 2, "T": 5, "seed": 1, "learning_rate": 0.001},
    "sample": {"gamma": 2.0, "conditions": {"acc": 0}, "filter_valid": false},
    "eval": {"runs": 2, "queries": 5}
  })");
}

BenchmarkRecord record(const CellGraph& cell, double val, double test) {
  return BenchmarkRecord{canonical_key(cell), cell, val, test, {}};
}

std::vector<std::string> texts(const std::vector<CellGraph>& cells) {
  std::vector<std::string> out;
  for (const auto& c : cells) out.push_back(testing::text_form(c));
  return out;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("best of three") {
  const auto cells = enumerate_space(spaces::desk());
  BenchmarkTable table;
  table.insert(record(cells[0], 90.0, 89.0));
  table.insert(record(cells[1], 92.0, 90.5));
  table.insert(record(cells[2], 91.0, 93.0));
  const auto r = evaluate({cells[0], cells[1], cells[2]}, table, 1, 3);
  CHECK(r.max_val_acc_mean == 92.0);
  CHECK(r.corresponding_test_acc_mean == 90.5);
  CHECK(r.max_val_acc_std == 0.0);
  CHECK(table.query_count() == 3);
}

TEST_CASE("budget audit: ten runs of 192 queries") {
  const auto space = spaces::desk_dag();
  const auto table = synth_benchmark(space, SyntheticSpec{{0, 1, 2, 3, 1, 0}, 1.0, 4, {}});
  auto cells = enumerate_space(space);
  cells.resize(1920);
  // misses still cost a query
  cells[5].connect(0, 5);
  const auto r = evaluate(cells, table, 10, 192);
  CHECK(table.query_count() == 1920);
  CHECK(r.queries_used == 1920);
  CHECK(r.misses == 1);
  CHECK(r.runs == 10);
  CHECK(r.max_val_acc_std >= 0.0);
  CHECK(r.max_val_acc_mean > 0.0);
}

TEST_CASE("eval preconditions") {
  const auto cells = enumerate_space(spaces::desk());
  BenchmarkTable table;
  CHECK_THROWS_AS(evaluate(cells, table, 1, 0), std::invalid_argument);
  try {
    evaluate(cells, table, 2, 50);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("100") != std::string::npos);
  }
}

TEST_CASE("runs without hits are excluded from the means") {
  const auto cells = enumerate_space(spaces::desk());
  BenchmarkTable table;
  table.insert(record(cells[0], 80.0, 79.0));
  const auto r = evaluate({cells[0], cells[1], cells[2], cells[3]}, table, 2, 2);
  CHECK(r.runs_without_hits == 1);
  CHECK(r.max_val_acc_mean == 80.0);
  CHECK(r.misses == 3);
}

TEST_CASE("novelty and uniqueness definitions") {
  const auto cells = enumerate_space(spaces::desk());
  SUBCASE("generations inside the training set are not novel") {
    const std::vector<CellGraph> gen{cells[1], cells[2], cells[1]};
    CHECK(novelty_pct(gen, cells) == 0.0);
  }
  SUBCASE("two duplicates in four") {
    const std::vector<CellGraph> gen{cells[3], cells[3], cells[4], cells[5]};
    CHECK(uniqueness_pct(gen) == 50.0);
    CHECK(oracle::uniqueness_pct(texts(gen)) == 50.0);
  }
  SUBCASE("agreement with a multiset oracle on random corpora") {
    Rng rng(1);
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<CellGraph> gen, train;
      const int g = static_cast<int>(rng.uniform_int(1, 60));
      for (int k = 0; k < g; ++k) gen.push_back(cells[rng.uniform_int(0, 30)]);
      for (int k = 0; k < 20; ++k) train.push_back(cells[rng.uniform_int(0, 40)]);
      const auto r = analyze(gen, train);
      CHECK(r.generations == g);
      CHECK(r.novelty_pct == oracle::novelty_pct(texts(gen), texts(train)));
      CHECK(r.uniqueness_pct == oracle::uniqueness_pct(texts(gen)));
    }
  }
}

TEST_CASE("feasibility against a latency constraint") {
  const auto cells = enumerate_space(spaces::desk());
  BenchmarkTable table;
  for (int k = 0; k < 4; ++k) {
    auto r = record(cells[k], 50.0, 50.0);
    r.latency["cpu"] = 1.0 + k;
    table.insert(r);
  }
  ConditionSchema schema;
  ConditionSpec lat;
  lat.name = "lat";
  lat.metric = "latency:cpu";
  lat.direction = Direction::kLowerIsBetter;
  lat.thresholds = {2.5};
  schema.conditions = {lat};
  long unknown = 0;
  const auto f = feasibility_pct({cells[0], cells[1], cells[2], cells[3], cells[10]}, table, schema, &unknown);
  REQUIRE(f.has_value());
  CHECK(*f == doctest::Approx(40.0));
  CHECK(unknown == 1);
  CHECK(table.query_count() == 0);
  ConditionSchema acc_only;
  acc_only.conditions = {ConditionSpec{"acc", "val_acc", 2, Direction::kHigherIsBetter, {}, {50.0}}};
  CHECK_FALSE(feasibility_pct({cells[0]}, table, acc_only).has_value());
}

TEST_CASE("config parsing names the field") {
  auto j = small_config();
  CHECK_NOTHROW(parse_config(j));
  j.erase("synthetic");
  try {
    parse_config(j);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("'dataset'") != std::string::npos);
  }
  j = small_config();
  j["train"]["epochs"] = 0;
  try {
    parse_config(j);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("'train'") != std::string::npos);
  }
  j = small_config();
  j["space"] = "hexagon";
  CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("'space'"), std::invalid_argument);
}

TEST_CASE("condition arguments") {
  const auto config = parse_config(small_config());
  CHECK(parse_conditions({"acc=0"}, config.schema) == ConditionVector{{0}});
  CHECK(parse_conditions({}, config.schema).all_null());
  try {
    parse_conditions({"speed=0"}, config.schema);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("acc") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_conditions({"acc"}, config.schema), std::invalid_argument);
  CHECK_THROWS_AS(parse_conditions({"acc=x"}, config.schema), std::invalid_argument);
  CHECK_THROWS_AS(parse_conditions({"acc=5"}, config.schema), std::invalid_argument);
}

TEST_CASE("class split table") {
  CHECK(class_split_percentiles(2) == std::vector<double>{95});
  CHECK(class_split_percentiles(5) == std::vector<double>{30, 50, 80, 95});
  CHECK_THROWS_AS(class_split_percentiles(6), std::invalid_argument);
}

TEST_CASE("ablation sweeps") {
  const auto dir = testing::scratch_dir("ablate");
  const auto base = parse_config(small_config());
  CHECK_THROWS_AS(run_ablation("gamma", {}, base, dir), std::invalid_argument);
  CHECK_THROWS_AS(run_ablation("depth", {1}, base, dir), std::invalid_argument);

  const auto gamma_rows = run_ablation("gamma", {-4, -2, 2, 4}, base, dir);
  REQUIRE(gamma_rows.size() == 4);
  for (const auto& r : gamma_rows) {
    CHECK(r.ok);
    CHECK(r.eval.runs == 2);
  }
  CHECK(gamma_rows[0].setting == "-4");

  // seven classes has no split table: recorded, and the sweep continues
  const auto class_rows = run_ablation("classes", {2, 7, 3}, base, dir);
  REQUIRE(class_rows.size() == 3);
  CHECK(class_rows[0].ok);
  CHECK_FALSE(class_rows[1].ok);
  CHECK(class_rows[1].error.find("7") != std::string::npos);
  CHECK(class_rows[2].ok);

  const auto csv = io::read_file(dir / "ablation_classes.csv");
  int lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 4);
  CHECK(csv.rfind("schema_version,", 0) == 0);
}

}  // TEST_SUITE
