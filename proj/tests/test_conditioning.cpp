// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#include <numeric>
#include <stdexcept>

#include "doctest.h"

#include "dinas/conditioning.hpp"
#include "oracles.hpp"

using namespace dinas;

namespace {

ConditionSpec accuracy(std::vector<double> thresholds) {
  ConditionSpec c;
  c.name = "acc";
  c.num_classes = static_cast<int>(thresholds.size()) + 1;
  c.thresholds = std::move(thresholds);
  return c;
}

PredictedProbs random_probs(int n, int k, int ke, Rng& rng) {
  PredictedProbs p{Matrix(n, k), Matrix(n * n, ke)};
  for (auto* m : {&p.nodes, &p.edges}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) (*m)(r, c) = std::exp(3.0 * rng.normal());
      m->row(r) /= m->row(r).sum();
    }
  }
  return p;
}

}  // namespace

TEST_SUITE("conditioning") {

TEST_CASE("percentile calibration") {
  std::vector<double> values(100);
  std::iota(values.begin(), values.end(), 1.0);
  const auto t = calibrate_splits(values, {95});
  REQUIRE(t.size() == 1);
  CHECK(t[0] == doctest::Approx(95.05).epsilon(1e-12));
  CHECK(t[0] == doctest::Approx(oracle::percentile(values, 95)).epsilon(1e-12));

  Rng rng(1);
  std::vector<double> noisy(257);
  for (double& v : noisy) v = rng.normal(10.0, 3.0);
  const auto many = calibrate_splits(noisy, {30, 50, 80, 95});
  const double ps[] = {30, 50, 80, 95};
  for (int k = 0; k < 4; ++k) CHECK(many[k] == doctest::Approx(oracle::percentile(noisy, ps[k])).epsilon(1e-12));

  CHECK(calibrate_splits(std::vector<double>(7, 4.25), {95})[0] == 4.25);
  CHECK_THROWS_AS(calibrate_splits({}, {95}), std::invalid_argument);
  CHECK_THROWS_AS(calibrate_splits({1.0, 2.0}, {0}), std::invalid_argument);
  CHECK_THROWS_AS(calibrate_splits({1.0, 2.0}, {80, 50}), std::invalid_argument);
}

TEST_CASE("discretize") {
  std::vector<double> values(100);
  std::iota(values.begin(), values.end(), 1.0);
  const auto acc = accuracy(calibrate_splits(values, {95}));
  CHECK(discretize(oracle::percentile(values, 97), acc) == 0);
  CHECK(discretize(oracle::percentile(values, 50), acc) == 1);
  CHECK(discretize(acc.thresholds[0], acc) == 0);  // ties go to the better class

  ConditionSpec lat;
  lat.name = "lat";
  lat.metric = "latency:cpu";
  lat.direction = Direction::kLowerIsBetter;
  lat.thresholds = {2.0};
  CHECK(discretize(1.5, lat) == 0);
  CHECK(discretize(2.0, lat) == 0);
  CHECK(discretize(2.5, lat) == 1);

  SUBCASE("monotone for higher-is-better") {
    const auto four = accuracy({10.0, 20.0, 30.0});
    int prev = discretize(-100.0, four);
    CHECK(prev == 3);
    for (double v = -100.0; v <= 100.0; v += 0.25) {
      const int c = discretize(v, four);
      CHECK(c <= prev);
      prev = c;
    }
    CHECK(prev == 0);
  }
}

TEST_CASE("condition dropout") {
  Rng rng(2);
  const ConditionVector c{{0, 1}};
  for (int k = 0; k < 1000; ++k) CHECK(drop_conditions(c, 0.0, rng) == c);
  for (int k = 0; k < 1000; ++k) CHECK(drop_conditions(c, 1.0, rng).all_null());
  int nulls = 0;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) {
    const auto d = drop_conditions(c, 0.1, rng);
    CHECK((d.all_null() || d == c));  // never partially null
    nulls += d.all_null();
  }
  const double frac = static_cast<double>(nulls) / draws;
  CHECK(frac >= 0.094);
  CHECK(frac <= 0.106);
}

TEST_CASE("combine identities") {
  Rng rng(3);
  const auto u = random_probs(4, 5, 3, rng);
  const auto c = random_probs(4, 5, 3, rng);
  for (auto space : {CombineSpace::kLogProbability, CombineSpace::kProbability}) {
    const auto one = combine_scores(u, c, 1.0, space);
    const auto zero = combine_scores(u, c, 0.0, space);
    CHECK(one.nodes == c.nodes);
    CHECK(one.edges == c.edges);
    CHECK(zero.nodes == u.nodes);
    CHECK(zero.edges == u.edges);
  }
}

TEST_CASE("log-space geometric mean of two categories") {
  PredictedProbs u{(Matrix(1, 2) << 0.8, 0.2).finished(), (Matrix(1, 2) << 0.5, 0.5).finished()};
  PredictedProbs c{(Matrix(1, 2) << 0.2, 0.8).finished(), (Matrix(1, 2) << 0.5, 0.5).finished()};
  const auto p = combine_scores(u, c, 0.5);
  // sqrt(0.8 * 0.2) for both entries, normalized
  CHECK(p.nodes(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.nodes(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  const auto q = combine_scores(u, c, 2.0);
  // u^-1 c^2 = [0.05, 3.2] -> normalized
  CHECK(q.nodes(0, 0) == doctest::Approx(0.05 / 3.25).epsilon(1e-12));
}

TEST_CASE("combined rows are distributions for every scale") {
  Rng rng(4);
  for (double gamma : {-4.0, -2.0, 0.0, 0.5, 1.0, 2.0, 4.0}) {
    for (int trial = 0; trial < 50; ++trial) {
      const auto u = random_probs(3, 4, 2, rng);
      const auto c = random_probs(3, 4, 2, rng);
      for (auto space : {CombineSpace::kLogProbability, CombineSpace::kProbability}) {
        const auto p = combine_scores(u, c, gamma, space);
        CHECK((p.nodes.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);
        CHECK((p.edges.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);
        CHECK(p.nodes.minCoeff() >= 0.0);
      }
    }
  }
}

TEST_CASE("log-space combination commutes with category permutation") {
  Rng rng(5);
  const std::vector<int> perm{2, 0, 3, 1};
  for (double gamma : {-4.0, 0.5, 3.0}) {
    const auto u = random_probs(2, 4, 2, rng);
    const auto c = random_probs(2, 4, 2, rng);
    auto permute = [&](const PredictedProbs& p) {
      PredictedProbs out = p;
      for (int k = 0; k < 4; ++k) out.nodes.col(k) = p.nodes.col(perm[k]);
      return out;
    };
    const auto direct = permute(combine_scores(u, c, gamma));
    const auto permuted = combine_scores(permute(u), permute(c), gamma);
    CHECK((direct.nodes - permuted.nodes).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("probability space floors negative entries") {
  PredictedProbs u{(Matrix(1, 2) << 0.9, 0.1).finished(), (Matrix(1, 2) << 0.5, 0.5).finished()};
  PredictedProbs c{(Matrix(1, 2) << 0.1, 0.9).finished(), (Matrix(1, 2) << 0.5, 0.5).finished()};
  CombineDiagnostics diag;
  const auto p = combine_scores(u, c, 2.0, CombineSpace::kProbability, &diag);
  CHECK(diag.floored_entries == 1);
  CHECK(p.nodes(0, 0) == 0.0);
  CHECK(p.nodes(0, 1) == 1.0);
}

TEST_CASE("probability space with no surviving mass names the row") {
  // 2 c - u is negative in both entries of node row 1
  PredictedProbs u{(Matrix(2, 2) << 0.5, 0.5, 0.5, 0.5).finished(), (Matrix(1, 2) << 0.5, 0.5).finished()};
  PredictedProbs c{(Matrix(2, 2) << 0.5, 0.5, 0.0, 0.0).finished(), (Matrix(1, 2) << 0.5, 0.5).finished()};
  try {
    combine_scores(u, c, 2.0, CombineSpace::kProbability);
    FAIL("expected a domain error");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("node row 1") != std::string::npos);
  }
}

TEST_CASE("schema serialization and hashing") {
  ConditionSchema s;
  s.conditions.push_back(accuracy({90.0}));
  ConditionSpec lat;
  lat.name = "lat";
  lat.metric = "latency:cpu";
  lat.direction = Direction::kLowerIsBetter;
  lat.thresholds = {2.0};
  s.conditions.push_back(lat);
  s.check();
  const auto back = schema_from_json(schema_to_json(s));
  CHECK(back.hash() == s.hash());
  CHECK(s.hash().size() == 16);
  auto changed = s;
  changed.conditions[0].thresholds[0] = 91.0;
  CHECK(changed.hash() != s.hash());
  CHECK(s.index_of("lat") == 1);
  try {
    s.index_of("speed");
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("acc") != std::string::npos);
    CHECK(msg.find("lat") != std::string::npos);
  }
  CHECK_THROWS_AS(check_condition(ConditionVector{{0}}, s), std::invalid_argument);
  CHECK_THROWS_AS(check_condition(ConditionVector{{2, 0}}, s), std::invalid_argument);
  CHECK_NOTHROW(check_condition(ConditionVector{{ConditionVector::kNull, 1}}, s));
  auto bad = s;
  bad.conditions[0].num_classes = 3;
  bad.conditions[0].thresholds = {5.0, 5.0};
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
}

}  // TEST_SUITE
