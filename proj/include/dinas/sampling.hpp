// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "dinas/cell_graph.hpp"
#include "dinas/conditioning.hpp"
#include "dinas/denoiser.hpp"
#include "dinas/noise.hpp"
#include "dinas/rng.hpp"
#include "dinas/training.hpp"

namespace dinas {

struct SampleRequest {
  int count = 1;
  ConditionVector conditions;
  double gamma = -4.0;
  std::uint64_t seed = 0;
  bool filter_valid = true;
  CombineSpace combine_space = CombineSpace::kLogProbability;
};

/// Any predictor of clean categories. The real one wraps forward(); tests
/// substitute counting or poisoned predictors.
using DenoiseFn = std::function<PredictedProbs(const CellGraph& noisy, int t, const ConditionVector& cond)>;

DenoiseFn model_fn(const DenoiserParams& params);

/// G^T: node count from `node_count_dist`, node ops ~ mX, upper-triangle edges ~ mE.
CellGraph sample_prior(const std::map<int, double>& node_count_dist, const Marginals& marginals, Rng& rng);

struct SampleDiagnostics {
  long forward_calls = 0;
  long floored_entries = 0;  // probability-space combination only
};

/// Reverse chain t = T..1 from `prior`: unconditional and conditional passes,
/// guided combination, exact posterior, independent categorical draws. The
/// categorical state after t = 1 is returned as is.
CellGraph denoise_chain(const DenoiseFn& model, CellGraph prior, const ConditionVector& cond, double gamma,
                        CombineSpace space, const DiffusionSchedule& schedule, const Marginals& marginals, Rng& rng,
                        SampleDiagnostics* diag = nullptr);

struct SampleResult {
  std::vector<CellGraph> cells;
  long attempts = 0;
  long valid = 0;
  double validity_rate = 0.0;
  double seconds_total = 0.0;
  double seconds_per_arch = 0.0;  // wall time per generated (attempted) cell
  bool budget_exhausted = false;
  std::string diagnostic;
  SampleDiagnostics diag;
};

/// Attempt a uses Rng::stream(seed, a). With filter_valid, invalid cells are
/// discarded and retried up to 10 x count attempts in total.
SampleResult sample(const DenoiseFn& model, const SampleRequest& request, const RunManifest& manifest);
SampleResult sample(const DenoiserParams& params, const SampleRequest& request, const RunManifest& manifest);

nlohmann::json sample_report(const SampleResult& result, const SampleRequest& request, const RunManifest& manifest);

}  // namespace dinas
