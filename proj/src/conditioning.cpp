// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#include "dinas/conditioning.hpp"

#include <algorithm>
#include <cstdio>

namespace dinas {

int ConditionSchema::index_of(std::string_view name) const {
  for (int k = 0; k < size(); ++k)
    if (conditions[k].name == name) return k;
  std::string known;
  for (const auto& c : conditions) known += (known.empty() ? "" : ", ") + c.name;
  throw std::invalid_argument("unknown condition '" + std::string(name) + "' (schema has: " + known + ")");
}

void ConditionSchema::check() const {
  if (conditions.empty()) throw std::invalid_argument("condition schema needs at least one condition");
  for (const auto& c : conditions) {
    if (c.name.empty()) throw std::invalid_argument("condition without a name");
    if (c.num_classes < 2) throw std::invalid_argument("condition '" + c.name + "' needs at least 2 classes");
    if (static_cast<int>(c.thresholds.size()) != c.num_classes - 1) {
      throw std::invalid_argument("condition '" + c.name + "' needs " + std::to_string(c.num_classes - 1) +
                                  " thresholds, has " + std::to_string(c.thresholds.size()));
    }
    for (std::size_t k = 1; k < c.thresholds.size(); ++k) {
      if (!(c.thresholds[k] > c.thresholds[k - 1])) {
        throw std::invalid_argument("condition '" + c.name + "': thresholds must be strictly ascending");
      }
    }
  }
  for (int a = 0; a < size(); ++a)
    for (int b = a + 1; b < size(); ++b)
      if (conditions[a].name == conditions[b].name) {
        throw std::invalid_argument("duplicate condition name '" + conditions[a].name + "'");
      }
}

std::string ConditionSchema::hash() const {
  const std::string text = schema_to_json(*this).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json schema_to_json(const ConditionSchema& schema) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : schema.conditions) {
    list.push_back({{"name", c.name},
                    {"metric", c.metric},
                    {"classes", c.num_classes},
                    {"direction", c.direction == Direction::kHigherIsBetter ? "higher" : "lower"},
                    {"percentiles", c.percentiles},
                    {"thresholds", c.thresholds}});
  }
  return nlohmann::json{{"conditions", list}};
}

ConditionSchema schema_from_json(const nlohmann::json& j) {
  ConditionSchema schema;
  for (const auto& c : j.at("conditions")) {
    ConditionSpec spec;
    spec.name = c.at("name").get<std::string>();
    spec.metric = c.value("metric", std::string("val_acc"));
    spec.num_classes = c.value("classes", 2);
    const auto dir = c.value("direction", std::string("higher"));
    if (dir == "higher") {
      spec.direction = Direction::kHigherIsBetter;
    } else if (dir == "lower") {
      spec.direction = Direction::kLowerIsBetter;
    } else {
      throw std::invalid_argument("condition '" + spec.name + "': direction must be 'higher' or 'lower'");
    }
    spec.percentiles = c.value("percentiles", std::vector<double>{});
    spec.thresholds = c.value("thresholds", std::vector<double>{});
    schema.conditions.push_back(std::move(spec));
  }
  return schema;
}

bool ConditionVector::all_null() const {
  return std::all_of(classes.begin(), classes.end(), [](int c) { return c == kNull; });
}

bool ConditionVector::any_null() const {
  return std::any_of(classes.begin(), classes.end(), [](int c) { return c == kNull; });
}

void check_condition(const ConditionVector& cond, const ConditionSchema& schema) {
  if (cond.size() != schema.size()) {
    throw std::invalid_argument("condition vector has " + std::to_string(cond.size()) + " entries, schema has " +
                                std::to_string(schema.size()));
  }
  for (int k = 0; k < cond.size(); ++k) {
    const int c = cond.classes[k];
    if (c != ConditionVector::kNull && (c < 0 || c >= schema.conditions[k].num_classes)) {
      throw std::invalid_argument("class " + std::to_string(c) + " out of range for condition '" +
                                  schema.conditions[k].name + "'");
    }
  }
}

std::vector<double> calibrate_splits(std::vector<double> values, const std::vector<double>& percentiles) {
  if (values.size() < 2) throw std::invalid_argument("calibrate_splits needs at least two values");
  for (std::size_t k = 0; k < percentiles.size(); ++k) {
    if (!(percentiles[k] > 0.0 && percentiles[k] < 100.0)) {
      throw std::invalid_argument("percentiles must lie in (0, 100)");
    }
    if (k > 0 && !(percentiles[k] > percentiles[k - 1])) {
      throw std::invalid_argument("percentiles must be ascending");
    }
  }
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  for (double p : percentiles) {
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    out.push_back(values[lo] + frac * (values[hi] - values[lo]));
  }
  return out;
}

int discretize(double value, const ConditionSpec& spec) {
  int cls = 0;
  for (double threshold : spec.thresholds) {
    const bool worse = spec.direction == Direction::kHigherIsBetter ? value < threshold : value > threshold;
    if (worse) ++cls;
  }
  return cls;
}

ConditionVector drop_conditions(const ConditionVector& cond, double epsilon, Rng& rng) {
  if (rng.bernoulli(epsilon)) return ConditionVector::null(cond.size());
  return cond;
}

std::string_view to_string(CombineSpace space) {
  return space == CombineSpace::kLogProbability ? "log" : "probability";
}

CombineSpace combine_space_from_string(std::string_view s) {
  if (s == "log" || s == "log-probability") return CombineSpace::kLogProbability;
  if (s == "probability" || s == "linear") return CombineSpace::kProbability;
  throw std::invalid_argument("combine space must be 'log' or 'probability'");
}

}  // namespace dinas
