// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dinas/predicted_probs.hpp"
#include "dinas/rng.hpp"
#include "dinas/types.hpp"

namespace dinas {

enum class Direction { kHigherIsBetter, kLowerIsBetter };

/// One discretized target variable. Class 0 is always the best class.
struct ConditionSpec {
  std::string name;
  // Metric the condition reads: "val_acc", "test_acc" or "latency:<device>".
  std::string metric = "val_acc";
  int num_classes = 2;
  Direction direction = Direction::kHigherIsBetter;
  // Percentiles used to calibrate `thresholds`; empty when thresholds were
  // given directly in metric units (e.g. a latency constraint).
  std::vector<double> percentiles;
  std::vector<double> thresholds;  // num_classes - 1, strictly ascending
};

struct ConditionSchema {
  std::vector<ConditionSpec> conditions;

  int size() const { return static_cast<int>(conditions.size()); }
  int index_of(std::string_view name) const;
  void check() const;
  /// Hex FNV-1a digest of the schema JSON; ties checkpoints to manifests.
  std::string hash() const;
};

nlohmann::json schema_to_json(const ConditionSchema& schema);
ConditionSchema schema_from_json(const nlohmann::json& j);

struct ConditionVector {
  static constexpr int kNull = -1;
  std::vector<int> classes;

  static ConditionVector null(int k) { return ConditionVector{std::vector<int>(k, kNull)}; }
  int size() const { return static_cast<int>(classes.size()); }
  bool all_null() const;
  bool any_null() const;
  friend bool operator==(const ConditionVector&, const ConditionVector&) = default;
};

void check_condition(const ConditionVector& cond, const ConditionSchema& schema);

enum class CombineSpace { kLogProbability, kProbability };

struct GuidanceConfig {
  double gamma = -4.0;
  double epsilon = 0.1;
  CombineSpace combine_space = CombineSpace::kLogProbability;
};

/// Empirical percentiles with linear interpolation between order statistics
/// (rank = p/100 * (N-1)).
std::vector<double> calibrate_splits(std::vector<double> values, const std::vector<double>& percentiles);

/// Class index of `value`; ties at a threshold go to the better class.
int discretize(double value, const ConditionSpec& spec);

/// With probability epsilon every entry becomes null, otherwise the vector is
/// returned unchanged.
ConditionVector drop_conditions(const ConditionVector& cond, double epsilon, Rng& rng);

struct CombineDiagnostics {
  long floored_entries = 0;
};

inline constexpr double kLogFloor = 1e-12;

namespace detail {

template <typename T>
void combine_rows(const MatrixT<T>& uncond, const MatrixT<T>& cond, T gamma, CombineSpace space, MatrixT<T>& out,
                  CombineDiagnostics* diag, const char* what) {
  out.resize(uncond.rows(), uncond.cols());
  for (Eigen::Index r = 0; r < uncond.rows(); ++r) {
    auto row = out.row(r);
    if (space == CombineSpace::kLogProbability) {
      for (Eigen::Index c = 0; c < uncond.cols(); ++c) {
        row(c) = (T(1) - gamma) * std::log(std::max(uncond(r, c), T(kLogFloor))) +
                 gamma * std::log(std::max(cond(r, c), T(kLogFloor)));
      }
      row = (row.array() - row.maxCoeff()).exp();
    } else {
      row = (T(1) - gamma) * uncond.row(r) + gamma * cond.row(r);
      for (Eigen::Index c = 0; c < row.size(); ++c) {
        if (row(c) < T(0)) {
          row(c) = T(0);
          if (diag) ++diag->floored_entries;
        }
      }
    }
    const T total = row.sum();
    if (!(total > T(0)) || !std::isfinite(total)) {
      std::ostringstream msg;
      msg << "combine_scores: " << what << " row " << r << " has zero mass after combination";
      throw std::domain_error(msg.str());
    }
    row /= total;
  }
}

}  // namespace detail

/// Guided distribution from unconditional and conditional predictions.
/// Log space: p ~ p_u^(1-gamma) * p_c^gamma per row; probability space:
/// (1-gamma) p_u + gamma p_c with negative entries floored at zero. gamma = 0
/// and gamma = 1 return the corresponding input unchanged.
template <typename T>
PredictedProbsT<T> combine_scores(const PredictedProbsT<T>& uncond, const PredictedProbsT<T>& cond, T gamma,
                                  CombineSpace space = CombineSpace::kLogProbability,
                                  CombineDiagnostics* diag = nullptr) {
  if (!uncond.same_shape(cond)) throw std::invalid_argument("combine_scores: shape mismatch");
  if (gamma == T(0)) return uncond;
  if (gamma == T(1)) return cond;
  PredictedProbsT<T> out;
  detail::combine_rows(uncond.nodes, cond.nodes, gamma, space, out.nodes, diag, "node");
  detail::combine_rows(uncond.edges, cond.edges, gamma, space, out.edges, diag, "edge");
  return out;
}

std::string_view to_string(CombineSpace space);
CombineSpace combine_space_from_string(std::string_view s);

}  // namespace dinas
