// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion. `--only NAME` (repeatable)
// restricts the run to the named criteria.

#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dinas/bench.hpp"
#include "dinas/conditioning.hpp"
#include "dinas/denoiser.hpp"
#include "dinas/harness.hpp"
#include "dinas/io.hpp"
#include "dinas/noise.hpp"
#include "dinas/sampling.hpp"
#include "dinas/training.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dinas;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

RowVector random_simplex(int k, Rng& rng) {
  RowVector v(k);
  for (int i = 0; i < k; ++i) v[i] = 0.05 + rng.uniform();
  return v / v.sum();
}

Matrix random_rows(int rows, int k, Rng& rng) {
  Matrix m(rows, k);
  for (int r = 0; r < rows; ++r) m.row(r) = random_simplex(k, rng);
  return m;
}

oracle::Vec to_vec(const RowVector& v) { return oracle::Vec(v.data(), v.data() + v.size()); }

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

Verdict kernel_correctness() {
  Rng rng(11);
  const int steps = 16, k = 5;
  const auto s = DiffusionSchedule::cosine(steps);
  const Marginals m{random_simplex(k, rng), random_simplex(k, rng)};
  double row_err = 0, fixed_err = 0, prod_err = 0;
  Matrix prod = Matrix::Identity(k, k);
  for (int t = 1; t <= steps; ++t) {
    for (auto level : {KernelLevel::kCumulative, KernelLevel::kSingleStep}) {
      const auto q = kernel_at(s, m, t, level);
      row_err = std::max(row_err, (q.nodes.rowwise().sum().array() - 1.0).abs().maxCoeff());
      fixed_err = std::max(fixed_err, (m.nodes * q.nodes - m.nodes).cwiseAbs().maxCoeff());
    }
    prod = prod * kernel_at(s, m, t, KernelLevel::kSingleStep).nodes;
    prod_err = std::max(prod_err, (prod - kernel_at(s, m, t, KernelLevel::kCumulative).nodes).cwiseAbs().maxCoeff());
  }
  return {row_err <= 1e-9 && fixed_err <= 1e-9 && prod_err <= 1e-8,
          "row sum err " + fmt(row_err) + ", stationarity err " + fmt(fixed_err) + ", product err " + fmt(prod_err)};
}

Verdict posterior_oracle() {
  Rng rng(12);
  double worst = 0.0;
  long instances = 0;
  for (int k = 2; k <= 4; ++k) {
    for (int steps = 1; steps <= 8; ++steps) {
      const auto s = DiffusionSchedule::cosine(steps);
      const Marginals m{random_simplex(k, rng), random_simplex(k, rng)};
      const oracle::Vec abar(s.abar.begin(), s.abar.end());
      const auto qx = oracle::step_kernels(abar, to_vec(m.nodes));
      const auto qe = oracle::step_kernels(abar, to_vec(m.edges));
      for (int t = 1; t <= steps; ++t) {
        for (int z = 0; z < k; ++z) {
          for (int rep = 0; rep < 3; ++rep) {
            const RowVector px = random_simplex(k, rng);
            const RowVector pe_row = random_simplex(k, rng);
            auto noisy = CellGraph::with_ops({z, z});
            noisy.edges(0, 1) = z;
            Matrix pe = Matrix::Constant(4, k, 1.0 / k);
            pe.row(1) = pe_row;
            Matrix pxm(2, k);
            pxm.row(0) = px;
            pxm.row(1) = px;
            const auto post = posterior_step(pxm, pe, noisy, t, s, m);
            const auto ref_x = oracle::mixed_posterior(qx, to_vec(px), t, z);
            const auto ref_e = oracle::mixed_posterior(qe, to_vec(pe_row), t, z);
            for (int y = 0; y < k; ++y) {
              worst = std::max(worst, std::abs(post.nodes(0, y) - ref_x[y]));
              worst = std::max(worst, std::abs(post.edges(1, y) - ref_e[y]));
            }
            ++instances;
          }
        }
      }
    }
  }
  return {worst <= 1e-9, std::to_string(instances) + " instances, worst abs err " + fmt(worst)};
}

Verdict schedule_endpoints() {
  bool ok = true;
  std::string detail;
  for (int steps : {16, 50, 500, 1000}) {
    const auto s = DiffusionSchedule::cosine(steps, 0.008);
    ok = ok && std::abs(s.abar[steps]) <= 1e-12 && s.abar[0] >= 0.999;
    detail += "T=" + std::to_string(steps) + ": abar0 " + fmt(s.abar[0], 8) + " abarT " + fmt(s.abar[steps]) + "; ";
  }
  return {ok, detail};
}

Verdict gradient_fidelity() {
  Rng rng(13);
  const ModelShape shape{5, 2, {2, 3}, 20};
  const auto params = DenoiserParams::init(testing::tiny_config(2, 16), shape, rng);
  std::vector<TrainingExample> batch;
  for (int k = 0; k < 2; ++k) {
    TrainingExample ex;
    ex.clean = testing::random_cell(5, 5, 2, rng);
    ex.noisy = testing::random_cell(5, 5, 2, rng);
    ex.t = static_cast<int>(rng.uniform_int(1, 20));
    ex.cond = ConditionVector{{static_cast<int>(rng.uniform_int(-1, 1)), static_cast<int>(rng.uniform_int(-1, 2))}};
    batch.push_back(ex);
  }
  const double lambda = 5.0, h = 1e-4;
  const auto g = grad(params, batch, lambda);
  std::vector<std::string> names;
  for (const auto& [name, m] : params.tensors) names.push_back(name);
  auto probe = params;
  double worst = 0.0;
  const int checks = 256;
  for (int c = 0; c < checks; ++c) {
    const auto& name = c < static_cast<int>(names.size())
                           ? names[c]
                           : names[rng.uniform_int(0, static_cast<std::int64_t>(names.size()) - 1)];
    const auto idx = static_cast<Eigen::Index>(rng.uniform_int(0, params.tensors.at(name).size() - 1));
    double& w = probe.tensors.at(name).data()[idx];
    const double saved = w;
    w = saved + h;
    const double up = batch_loss(probe, batch, lambda);
    w = saved - h;
    const double down = batch_loss(probe, batch, lambda);
    w = saved;
    const double numeric = (up - down) / (2 * h);
    const double analytic = g.grads.at(name).data()[idx];
    worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
  }
  return {worst <= 1e-4, std::to_string(checks) + " parameters, worst relative err " + fmt(worst)};
}

Verdict guidance_identities() {
  Rng rng(14);
  long identity_failures = 0, invalid = 0;
  double worst_sum = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 7));
    const int kx = static_cast<int>(rng.uniform_int(2, 7)), ke = static_cast<int>(rng.uniform_int(2, 4));
    const PredictedProbs u{random_rows(n, kx, rng), random_rows(n * n, ke, rng)};
    const PredictedProbs c{random_rows(n, kx, rng), random_rows(n * n, ke, rng)};
    const auto one = combine_scores(u, c, 1.0);
    const auto zero = combine_scores(u, c, 0.0);
    if (!bitwise_equal(one.nodes, c.nodes) || !bitwise_equal(one.edges, c.edges) ||
        !bitwise_equal(zero.nodes, u.nodes) || !bitwise_equal(zero.edges, u.edges)) {
      ++identity_failures;
    }
    for (double gamma : {-4.0, -2.0, 0.5, 2.0, 4.0}) {
      const auto p = combine_scores(u, c, gamma);
      for (const Matrix* m : {&p.nodes, &p.edges}) {
        const double err = (m->rowwise().sum().array() - 1.0).abs().maxCoeff();
        worst_sum = std::max(worst_sum, err);
        if (!m->allFinite() || m->minCoeff() < 0.0 || err > 1e-9) ++invalid;
      }
    }
  }
  return {identity_failures == 0 && invalid == 0, "1000 inputs, identity failures " +
                                                      std::to_string(identity_failures) + ", invalid outputs " +
                                                      std::to_string(invalid) + ", worst row-sum err " + fmt(worst_sum)};
}

Verdict forward_marginal() {
  Rng rng(15);
  const int steps = 50;
  const auto s = DiffusionSchedule::cosine(steps);
  const Marginals m{(RowVector(6) << 0.05, 0.3, 0.25, 0.2, 0.15, 0.05).finished(),
                    (RowVector(2) << 0.7, 0.3).finished()};
  auto cell = CellGraph::with_ops({0, 1, 1, 5});
  cell.connect(0, 1).connect(1, 2).connect(2, 3);
  const auto oh = encode_onehot(cell, 6, 2);
  const int draws = 10000;
  oracle::Vec nodes(6, 0.0), edges(2, 0.0);
  for (int d = 0; d < draws; ++d) {
    const auto noisy = apply_noise(oh, steps, s, m, rng);
    nodes[noisy.ops[1]] += 1.0 / draws;
    edges[noisy.edges(0, 1)] += 1.0 / draws;
  }
  const double tv_x = oracle::total_variation(nodes, to_vec(m.nodes));
  const double tv_e = oracle::total_variation(edges, to_vec(m.edges));
  return {tv_x <= 0.02 && tv_e <= 0.02, "10000 draws at t=T, TV nodes " + fmt(tv_x) + ", TV edges " + fmt(tv_e)};
}

// Shared desk-scale experiment behind the two end-to-end criteria.
struct EndToEnd {
  static constexpr int kSeeds = 5;
  static constexpr int kSamples = 200;
  static constexpr double kGammas[4] = {-4.0, -2.0, 2.0, 4.0};

  BenchmarkTable table;
  double base_rate = 0.0;
  // [seed][gamma index] means; unconditional per seed
  std::vector<double> uncond_acc, uncond_feasible;
  std::vector<std::array<double, 4>> guided_acc, guided_hits, guided_feasible;
  std::string error;
  double seconds = 0.0;
};

SyntheticSpec desk_benchmark_spec() {
  // op order: input, conv3x3, conv1x1, maxpool3x3, skip, output
  SyntheticSpec spec;
  spec.op_weights = {0.0, 3.0, 1.5, -1.0, 0.0, 0.0};
  spec.depth_bonus = 1.0;
  spec.noise_seed = 2026;
  spec.latency_table["cpu"] = {0.0, 1.1, 1.3, 0.6, 1.6, 0.0};
  return spec;
}

ConditionSpec acc_condition() {
  ConditionSpec c;
  c.name = "acc";
  c.metric = "val_acc";
  c.num_classes = 2;
  c.percentiles = {95};
  return c;
}

ConditionSpec latency_condition() {
  ConditionSpec c;
  c.name = "lat";
  c.metric = "latency:cpu";
  c.num_classes = 2;
  c.direction = Direction::kLowerIsBetter;
  c.percentiles = {50};
  return c;
}

TrainConfig end_to_end_train(std::uint64_t seed) {
  TrainConfig t;
  t.epochs = 100;
  t.steps = 50;
  t.seed = seed;
  t.learning_rate = 2e-3;
  return t;
}

const EndToEnd& end_to_end() {
  static EndToEnd e = [] {
    EndToEnd r;
    const auto start = std::chrono::steady_clock::now();
    try {
      const auto space = spaces::desk_dag();
      r.table = synth_benchmark(space, desk_benchmark_spec());
      const auto dataset = dataset_from_benchmark(r.table);
      ConditionSchema schema_a, schema_b;
      schema_a.conditions = {acc_condition()};
      schema_b.conditions = {acc_condition(), latency_condition()};
      const auto calibrated_a = calibrate_schema(schema_a, dataset);
      long top = 0;
      for (const auto& d : dataset) top += discretize(d.metrics.at("val_acc"), calibrated_a.conditions[0]) == 0;
      r.base_rate = static_cast<double>(top) / static_cast<double>(dataset.size());

      const auto model = testing::tiny_config(2, 16);
      for (int seed = 0; seed < EndToEnd::kSeeds; ++seed) {
        const auto run_a = train_loop(dataset, space, schema_a, model, end_to_end_train(seed));
        const auto run_b = train_loop(dataset, space, schema_b, model, end_to_end_train(seed));
        const auto& acc_spec = run_a.manifest.schema.conditions[0];

        auto mean_acc = [&](const std::vector<CellGraph>& cells, double* hits) {
          double sum = 0.0;
          long count = 0, top_hits = 0;
          for (const auto& c : cells) {
            const auto* rec = r.table.peek(canonical_key(c));
            if (!rec) continue;
            sum += rec->val_acc;
            ++count;
            top_hits += discretize(rec->val_acc, acc_spec) == 0;
          }
          if (hits) *hits = static_cast<double>(top_hits) / EndToEnd::kSamples;
          return count ? sum / count : 0.0;
        };
        auto feasible = [&](const std::vector<CellGraph>& cells) {
          return feasibility_pct(cells, r.table, run_b.manifest.schema).value_or(0.0);
        };

        SampleRequest req;
        req.count = EndToEnd::kSamples;
        req.seed = 7000 + seed;
        req.conditions = ConditionVector::null(1);
        r.uncond_acc.push_back(mean_acc(sample(run_a.state.params, req, run_a.manifest).cells, nullptr));
        req.conditions = ConditionVector::null(2);
        r.uncond_feasible.push_back(feasible(sample(run_b.state.params, req, run_b.manifest).cells));

        std::array<double, 4> acc{}, hits{}, feas{};
        for (int g = 0; g < 4; ++g) {
          req.gamma = EndToEnd::kGammas[g];
          req.conditions = ConditionVector{{0}};
          acc[g] = mean_acc(sample(run_a.state.params, req, run_a.manifest).cells, &hits[g]);
          req.conditions = ConditionVector{{0, 0}};
          feas[g] = feasible(sample(run_b.state.params, req, run_b.manifest).cells);
        }
        r.guided_acc.push_back(acc);
        r.guided_hits.push_back(hits);
        r.guided_feasible.push_back(feas);
        std::cerr << "seed " << seed << ": uncond acc " << fmt(r.uncond_acc.back()) << ", guided acc";
        for (double a : acc) std::cerr << ' ' << fmt(a);
        std::cerr << ", hits";
        for (double h : hits) std::cerr << ' ' << fmt(h);
        std::cerr << "; uncond feasible " << fmt(r.uncond_feasible.back()) << ", guided feasible";
        for (double f : feas) std::cerr << ' ' << fmt(f);
        std::cerr << '\n';
      }
    } catch (const std::exception& ex) {
      r.error = ex.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }();
  return e;
}

// Index of the gamma with the best mean of `values` across seeds.
int best_gamma(const std::vector<std::array<double, 4>>& values) {
  int best = 0;
  double best_mean = -1e300;
  for (int g = 0; g < 4; ++g) {
    double sum = 0.0;
    for (const auto& v : values) sum += v[g];
    if (sum > best_mean) {
      best_mean = sum;
      best = g;
    }
  }
  return best;
}

Verdict conditional_lift() {
  const auto& e = end_to_end();
  if (!e.error.empty()) return {false, "experiment failed: " + e.error};
  const int g = best_gamma(e.guided_acc);
  int wins = 0;
  double hit_rate = 0.0, guided = 0.0, uncond = 0.0;
  for (int s = 0; s < EndToEnd::kSeeds; ++s) {
    wins += e.guided_acc[s][g] > e.uncond_acc[s];
    hit_rate += e.guided_hits[s][g] / EndToEnd::kSeeds;
    guided += e.guided_acc[s][g] / EndToEnd::kSeeds;
    uncond += e.uncond_acc[s] / EndToEnd::kSeeds;
  }
  const double required = 2.0 * std::max(0.05, e.base_rate);
  return {wins >= 4 && hit_rate >= required,
          "gamma " + fmt(EndToEnd::kGammas[g]) + ": guided > unconditional in " + std::to_string(wins) +
              "/5 seeds (means " + fmt(guided) + " vs " + fmt(uncond) + "), top-class hit rate " + fmt(hit_rate) +
              " vs required " + fmt(required) + " (base rate " + fmt(e.base_rate) + "), " + fmt(e.seconds, 3) +
              " s"};
}

Verdict feasibility_lift() {
  const auto& e = end_to_end();
  if (!e.error.empty()) return {false, "experiment failed: " + e.error};
  const int g = best_gamma(e.guided_feasible);
  int wins = 0;
  double guided = 0.0, uncond = 0.0;
  for (int s = 0; s < EndToEnd::kSeeds; ++s) {
    wins += e.guided_feasible[s][g] > e.uncond_feasible[s];
    guided += e.guided_feasible[s][g] / EndToEnd::kSeeds;
    uncond += e.uncond_feasible[s] / EndToEnd::kSeeds;
  }
  return {wins >= 4, "gamma " + fmt(EndToEnd::kGammas[g]) + ": guided feasibility above unconditional in " +
                         std::to_string(wins) + "/5 seeds (means " + fmt(guided) + "% vs " + fmt(uncond) + "%)"};
}

std::vector<std::string> texts(const std::vector<CellGraph>& cells) {
  std::vector<std::string> out;
  for (const auto& c : cells) out.push_back(testing::text_form(c));
  return out;
}

Verdict metric_definitions() {
  const auto cells = enumerate_space(spaces::desk());
  long mismatches = 0, corpora = 0;
  auto compare = [&](const std::vector<CellGraph>& gen, const std::vector<CellGraph>& train) {
    const auto r = analyze(gen, train);
    mismatches += r.novelty_pct != oracle::novelty_pct(texts(gen), texts(train));
    mismatches += r.uniqueness_pct != oracle::uniqueness_pct(texts(gen));
    ++corpora;
  };
  const std::vector<CellGraph> two_in_four{cells[3], cells[3], cells[4], cells[5]};
  const bool half = analyze(two_in_four, {}).uniqueness_pct == 50.0;
  const bool none_novel = analyze({cells[1], cells[2]}, {cells[2], cells[1]}).novelty_pct == 0.0;
  compare(two_in_four, {cells[4]});
  compare({cells[0]}, {cells[0]});
  Rng rng(16);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CellGraph> gen, train;
    const auto g = rng.uniform_int(1, 80);
    for (int k = 0; k < g; ++k) gen.push_back(cells[rng.uniform_int(0, 40)]);
    const auto t = rng.uniform_int(0, 40);
    for (int k = 0; k < t; ++k) train.push_back(cells[rng.uniform_int(0, 60)]);
    compare(gen, train);
  }
  return {half && none_novel && mismatches == 0,
          std::to_string(corpora) + " corpora, mismatches " + std::to_string(mismatches) +
              ", 2-duplicates-in-4 uniqueness " + fmt(analyze(two_in_four, {}).uniqueness_pct) + "%"};
}

Verdict budget_audit() {
  const auto space = spaces::desk_dag();
  const auto table = synth_benchmark(space, desk_benchmark_spec());
  const auto dataset = dataset_from_benchmark(table);
  ConditionSchema schema;
  schema.conditions = {acc_condition()};
  TrainConfig train;
  train.epochs = 1;
  train.steps = 10;
  train.seed = 3;
  const auto run = train_loop(dataset, space, schema, testing::tiny_config(1, 8), train);
  SampleRequest req;
  req.count = 1920;
  req.seed = 4;
  req.filter_valid = false;
  req.conditions = ConditionVector{{0}};
  const auto cells = sample(run.state.params, req, run.manifest).cells;
  const long before = table.query_count();
  const auto report = evaluate(cells, table, 10, 192);
  const long used = table.query_count() - before;
  return {used == 1920 && report.queries_used == 1920,
          "query counter " + std::to_string(used) + " after R=10, Q=192 (" + std::to_string(report.misses) +
              " misses)"};
}

bool same_files(const fs::path& a, const fs::path& b, std::string& detail) {
  for (const char* f : {"checkpoint.json", "manifest.json", "train_log.csv", "training_set.jsonl"}) {
    if (io::read_file(a / f) != io::read_file(b / f)) {
      detail += std::string(f) + " differs; ";
      return false;
    }
  }
  return true;
}

Verdict determinism() {
  const auto space = spaces::desk_dag();
  const auto table = synth_benchmark(space, desk_benchmark_spec());
  const auto dataset = dataset_from_benchmark(table);
  ConditionSchema schema;
  schema.conditions = {acc_condition(), latency_condition()};
  TrainConfig train;
  train.epochs = 2;
  train.steps = 20;
  train.seed = 9;
  const auto root = testing::scratch_dir("acceptance_determinism");
  std::vector<std::string> sample_files;
  for (int rep = 0; rep < 2; ++rep) {
    const auto dir = root / ("run" + std::to_string(rep));
    const auto result = train_loop(dataset, space, schema, testing::tiny_config(2, 16), train);
    save_run(dir, result, dataset);
    const auto loaded = load_run(dir);
    SampleRequest req;
    req.count = 64;
    req.seed = 21;
    req.conditions = ConditionVector{{0, 0}};
    io::write_cells(dir / "samples.jsonl", sample(loaded.params, req, loaded.manifest).cells);
    sample_files.push_back(io::read_file(dir / "samples.jsonl"));
  }
  std::string detail;
  const bool runs_equal = same_files(root / "run0", root / "run1", detail);
  const bool samples_equal = sample_files[0] == sample_files[1] && !sample_files[0].empty();
  detail += std::string("run files ") + (runs_equal ? "identical" : "differ") + ", sample sets " +
            (samples_equal ? "identical" : "differ");
  return {runs_equal && samples_equal, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--only" && i + 1 < argc) only.insert(argv[++i]);
  }
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"kernel-correctness", kernel_correctness},
      {"posterior-oracle", posterior_oracle},
      {"schedule-endpoints", schedule_endpoints},
      {"gradient-fidelity", gradient_fidelity},
      {"guidance-identities", guidance_identities},
      {"forward-marginal", forward_marginal},
      {"conditional-lift", conditional_lift},
      {"feasibility-lift", feasibility_lift},
      {"metric-definitions", metric_definitions},
      {"budget-audit", budget_audit},
      {"determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << " [" << fmt(secs, 3) << " s]"
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
