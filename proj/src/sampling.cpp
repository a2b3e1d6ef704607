// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#include "dinas/sampling.hpp"

#include <chrono>
#include <stdexcept>

namespace dinas {

DenoiseFn model_fn(const DenoiserParams& params) {
  return [&params](const CellGraph& noisy, int t, const ConditionVector& cond) {
    return forward(params, noisy, t, cond);
  };
}

CellGraph sample_prior(const std::map<int, double>& node_count_dist, const Marginals& marginals, Rng& rng) {
  if (node_count_dist.empty()) throw std::invalid_argument("sample_prior: empty node count distribution");
  std::vector<int> sizes;
  RowVector weights(static_cast<Eigen::Index>(node_count_dist.size()));
  for (const auto& [n, p] : node_count_dist) {
    weights[static_cast<Eigen::Index>(sizes.size())] = p;
    sizes.push_back(n);
  }
  const int n = sizes[rng.categorical(weights)];
  CellGraph g = CellGraph::with_ops(std::vector<int>(n, 0));
  for (int i = 0; i < n; ++i) {
    g.ops[i] = rng.categorical(marginals.nodes);
    for (int j = i + 1; j < n; ++j) g.edges(i, j) = rng.categorical(marginals.edges);
  }
  return g;
}

CellGraph denoise_chain(const DenoiseFn& model, CellGraph z, const ConditionVector& cond, double gamma,
                        CombineSpace space, const DiffusionSchedule& schedule, const Marginals& marginals, Rng& rng,
                        SampleDiagnostics* diag) {
  const auto uncond_cond = ConditionVector::null(cond.size());
  CombineDiagnostics combine;
  const int n = z.num_nodes();
  for (int t = schedule.steps; t >= 1; --t) {
    const auto pu = model(z, t, uncond_cond);
    const auto pc = model(z, t, cond);
    if (diag) diag->forward_calls += 2;
    const auto p = combine_scores(pu, pc, gamma, space, &combine);
    const auto post = posterior_step(p.nodes, p.edges, z, t, schedule, marginals);
    for (int i = 0; i < n; ++i) {
      z.ops[i] = rng.categorical(post.nodes.row(i));
      for (int j = i + 1; j < n; ++j) z.edges(i, j) = rng.categorical(post.edges.row(pair_row(i, j, n)));
    }
  }
  if (diag) diag->floored_entries += combine.floored_entries;
  z.provenance = Provenance::kGenerated;
  return z;
}

SampleResult sample(const DenoiseFn& model, const SampleRequest& request, const RunManifest& manifest) {
  if (request.count < 1) throw std::invalid_argument("sample count must be at least 1");
  check_condition(request.conditions, manifest.schema);
  const auto schedule = manifest.schedule();
  const long budget = request.filter_valid ? 10L * request.count : request.count;

  SampleResult out;
  const auto start = std::chrono::steady_clock::now();
  while (static_cast<long>(out.cells.size()) < request.count && out.attempts < budget) {
    Rng rng = Rng::stream(request.seed, static_cast<std::uint64_t>(out.attempts));
    ++out.attempts;
    auto prior = sample_prior(manifest.node_count_dist, manifest.marginals, rng);
    auto cell = denoise_chain(model, std::move(prior), request.conditions, request.gamma, request.combine_space,
                              schedule, manifest.marginals, rng, &out.diag);
    const bool ok = validate_cell(cell, manifest.space).is_valid();
    if (ok) ++out.valid;
    if (ok || !request.filter_valid) out.cells.push_back(std::move(cell));
  }
  out.seconds_total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.seconds_per_arch = out.seconds_total / static_cast<double>(out.attempts);
  out.validity_rate = static_cast<double>(out.valid) / static_cast<double>(out.attempts);
  if (static_cast<long>(out.cells.size()) < request.count) {
    out.budget_exhausted = true;
    out.diagnostic = "retry budget of " + std::to_string(budget) + " attempts exhausted with " +
                     std::to_string(out.cells.size()) + " of " + std::to_string(request.count) + " valid cells";
  }
  return out;
}

SampleResult sample(const DenoiserParams& params, const SampleRequest& request, const RunManifest& manifest) {
  if (params.shape.diffusion_steps != manifest.steps) {
    throw std::invalid_argument("model step count does not match the manifest");
  }
  if (static_cast<int>(params.shape.condition_classes.size()) != manifest.schema.size()) {
    throw std::invalid_argument("model conditions do not match the manifest schema");
  }
  return sample(model_fn(params), request, manifest);
}

nlohmann::json sample_report(const SampleResult& result, const SampleRequest& request, const RunManifest& manifest) {
  nlohmann::json cond = nlohmann::json::object();
  for (int k = 0; k < manifest.schema.size(); ++k) {
    const int c = request.conditions.classes[k];
    cond[manifest.schema.conditions[k].name] = c == ConditionVector::kNull ? nlohmann::json(nullptr) : nlohmann::json(c);
  }
  return {{"requested", request.count},
          {"emitted", result.cells.size()},
          {"attempts", result.attempts},
          {"valid", result.valid},
          {"validity_rate", result.validity_rate},
          {"seconds_total", result.seconds_total},
          {"seconds_per_arch", result.seconds_per_arch},
          {"forward_calls", result.diag.forward_calls},
          {"floored_entries", result.diag.floored_entries},
          {"budget_exhausted", result.budget_exhausted},
          {"diagnostic", result.diagnostic},
          {"config",
           {{"conditions", cond},
            {"gamma", request.gamma},
            {"seed", request.seed},
            {"filter_valid", request.filter_valid},
            {"combine_space", std::string(to_string(request.combine_space))},
            {"schema_hash", manifest.schema.hash()}}}};
}

}  // namespace dinas
