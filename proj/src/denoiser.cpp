// Copyright 2026 The dinas Authors
// SPDX-License-Identifier: Apache-2.0

#include "dinas/denoiser.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dinas/autodiff.hpp"

namespace dinas {

void DenoiserConfig::check() const {
  if (n_layers < 1) throw std::invalid_argument("denoiser needs at least one layer");
  if (hidden_dim < 2 || n_heads < 1 || hidden_dim % n_heads != 0) {
    throw std::invalid_argument("hidden_dim must be divisible by n_heads");
  }
  if (pe_dim != hidden_dim) throw std::invalid_argument("pe_dim must equal hidden_dim");
  if (pe_dim % 2 != 0) throw std::invalid_argument("pe_dim must be even");
  if (edge_dim < 1 || ffn_dim < 1) throw std::invalid_argument("edge_dim and ffn_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must lie in [0, 1)");
}

namespace {

std::string layer_key(int l, const char* name) { return "layer" + std::to_string(l) + "." + name; }
std::string cond_key(int k) { return "cond" + std::to_string(k) + ".table"; }

}  // namespace

DenoiserParams DenoiserParams::init(const DenoiserConfig& config, const ModelShape& shape, Rng& rng) {
  config.check();
  if (shape.num_ops < 1 || shape.num_edge_types < 1 || shape.diffusion_steps < 1) {
    throw std::invalid_argument("model shape must have positive vocabularies and steps");
  }
  DenoiserParams p{config, shape, {}};
  const int d = config.hidden_dim;
  const int de = config.edge_dim;
  const int f = config.ffn_dim;
  auto linear = [&](const std::string& name, int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(in, out);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = rng.uniform(-bound, bound);
    p.tensors[name + ".w"] = std::move(w);
    p.tensors[name + ".b"] = Matrix::Zero(1, out);
  };
  auto norm = [&](const std::string& name, int width) {
    p.tensors[name + ".g"] = Matrix::Ones(1, width);
    p.tensors[name + ".b"] = Matrix::Zero(1, width);
  };
  linear("in_x.l1", shape.num_ops, d);
  linear("in_x.l2", d, d);
  linear("in_e.l1", shape.num_edge_types, de);
  linear("in_e.l2", de, de);
  linear("time.l1", d, d);
  linear("time.l2", d, d);
  linear("glob_x", d, d);
  linear("glob_e", d, de);
  for (std::size_t k = 0; k < shape.condition_classes.size(); ++k) {
    Matrix table(shape.condition_classes[k] + 1, d);
    for (Eigen::Index q = 0; q < table.size(); ++q) table.data()[q] = rng.normal(0.0, 0.02);
    p.tensors[cond_key(static_cast<int>(k))] = std::move(table);
  }
  for (int l = 0; l < config.n_layers; ++l) {
    linear(layer_key(l, "q"), d, d);
    linear(layer_key(l, "k"), d, d);
    linear(layer_key(l, "v"), d, d);
    linear(layer_key(l, "o"), d, d);
    linear(layer_key(l, "ebias"), de, d);
    linear(layer_key(l, "eupd"), d, de);
    linear(layer_key(l, "ff1"), d, f);
    linear(layer_key(l, "ff2"), f, d);
    norm(layer_key(l, "ln1"), d);
    norm(layer_key(l, "ln2"), d);
    norm(layer_key(l, "lne"), de);
  }
  linear("out_x.l1", d, d);
  linear("out_x.l2", d, shape.num_ops);
  linear("out_e.l1", de, de);
  linear("out_e.l2", de, shape.num_edge_types);
  return p;
}

std::size_t DenoiserParams::num_scalars() const {
  std::size_t total = 0;
  for (const auto& [name, m] : tensors) total += static_cast<std::size_t>(m.size());
  return total;
}

ParamMap DenoiserParams::zeros_like() const {
  ParamMap z;
  for (const auto& [name, m] : tensors) z.emplace(name, Matrix::Zero(m.rows(), m.cols()));
  return z;
}

bool DenoiserParams::all_finite() const {
  for (const auto& [name, m] : tensors)
    if (!m.allFinite()) return false;
  return true;
}

Matrix positional_encoding(int n, int dim) {
  if (dim % 2 != 0 || dim <= 0) throw std::invalid_argument("positional encoding width must be positive and even");
  Matrix pe(n, dim);
  for (int p = 0; p < n; ++p) {
    for (int i = 0; i < dim / 2; ++i) {
      const double angle = p / std::pow(10000.0, 2.0 * i / dim);
      pe(p, 2 * i) = std::sin(angle);
      pe(p, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

RowVector timestep_encoding(int t, int steps, int dim) {
  if (dim % 2 != 0 || dim <= 0) throw std::invalid_argument("timestep encoding width must be positive and even");
  const double pos = static_cast<double>(t) / steps;
  RowVector e(dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double angle = pos / std::pow(10000.0, 2.0 * i / dim);
    e(2 * i) = std::sin(angle);
    e(2 * i + 1) = std::cos(angle);
  }
  return e;
}

namespace {

using ad::Tape;
using ad::Var;

class Network {
 public:
  Network(Tape& tape, const DenoiserParams& params, Rng* dropout_rng)
      : tape_(tape), params_(params), dropout_rng_(dropout_rng) {
    for (const auto& [name, m] : params.tensors) vars_.emplace(name, tape.parameter(m));
  }

  struct Logits {
    Var nodes;
    Var edges;
  };

  Logits build(const OneHotCell& noisy, int t, const ConditionVector& cond) {
    const auto& cfg = params_.config;
    const auto& shape = params_.shape;
    const int n = noisy.num_nodes();
    if (noisy.nodes.cols() != shape.num_ops || noisy.edges.cols() != shape.num_edge_types ||
        noisy.edges.rows() != static_cast<Eigen::Index>(n) * n) {
      throw std::invalid_argument("denoiser input does not match the model vocabulary");
    }
    if (cond.size() != static_cast<int>(shape.condition_classes.size())) {
      throw std::invalid_argument("condition vector length does not match the model");
    }
    if (t < 1 || t > shape.diffusion_steps) throw std::out_of_range("denoiser step outside [1, T]");

    // global vector: timestep embedding plus one embedding per condition
    Var g = tape_.constant(timestep_encoding(t, shape.diffusion_steps, cfg.hidden_dim));
    g = linear(ad::silu(linear(g, "time.l1")), "time.l2");
    for (int k = 0; k < cond.size(); ++k) {
      const int cls = cond.classes[k];
      const int row = cls == ConditionVector::kNull ? shape.condition_classes[k] : cls;
      if (row < 0 || row > shape.condition_classes[k]) throw std::invalid_argument("condition class out of range");
      g = ad::add(g, ad::gather_row(param(cond_key(k)), row));
    }

    Var x = tape_.constant(noisy.nodes);
    x = linear(ad::silu(linear(x, "in_x.l1")), "in_x.l2");
    x = ad::add(x, tape_.constant(positional_encoding(n, cfg.pe_dim)));
    x = ad::add_row(x, linear(g, "glob_x"));

    Var e = tape_.constant(noisy.edges);
    e = linear(ad::silu(linear(e, "in_e.l1")), "in_e.l2");
    e = ad::add_row(e, linear(g, "glob_e"));

    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim / cfg.n_heads));
    for (int l = 0; l < cfg.n_layers; ++l) {
      Var q = ad::matmul(x, param(layer_key(l, "q.w")));
      Var k = ad::matmul(x, param(layer_key(l, "k.w")));
      Var v = ad::matmul(x, param(layer_key(l, "v.w")));
      // per-channel pre-softmax attention, modulated by the projected edge
      Var y = ad::add(ad::pair_products(q, k, attn_scale), linear(e, layer_key(l, "ebias")));
      Var attn = ad::attention_apply(ad::head_sum(y, cfg.n_heads), v, cfg.n_heads);
      attn = dropout(linear(attn, layer_key(l, "o")));
      x = norm(ad::add(x, attn), layer_key(l, "ln1"));
      Var ff = linear(ad::silu(linear(x, layer_key(l, "ff1"))), layer_key(l, "ff2"));
      x = norm(ad::add(x, dropout(ff)), layer_key(l, "ln2"));
      e = norm(ad::add(e, linear(y, layer_key(l, "eupd"))), layer_key(l, "lne"));
    }
    Var node_logits = linear(ad::silu(linear(x, "out_x.l1")), "out_x.l2");
    Var edge_logits = linear(ad::silu(linear(e, "out_e.l1")), "out_e.l2");
    return {node_logits, edge_logits};
  }

  const std::map<std::string, Var>& vars() const { return vars_; }

 private:
  Var param(const std::string& name) const {
    const auto it = vars_.find(name);
    if (it == vars_.end()) throw std::runtime_error("checkpoint is missing parameter '" + name + "'");
    return it->second;
  }
  Var linear(Var in, const std::string& name) {
    return ad::add_row(ad::matmul(in, param(name + ".w")), param(name + ".b"));
  }
  Var norm(Var in, const std::string& name) { return ad::layer_norm(in, param(name + ".g"), param(name + ".b")); }
  Var dropout(Var in) {
    const double rate = params_.config.dropout;
    if (!dropout_rng_ || rate <= 0.0) return in;
    const Matrix& val = tape_.value(in);
    Matrix mask(val.rows(), val.cols());
    for (Eigen::Index k = 0; k < mask.size(); ++k) {
      mask.data()[k] = dropout_rng_->bernoulli(rate) ? 0.0 : 1.0 / (1.0 - rate);
    }
    return ad::mul_const(in, mask);
  }

  Tape& tape_;
  const DenoiserParams& params_;
  Rng* dropout_rng_;
  std::map<std::string, Var> vars_;
};

struct LossTargets {
  std::vector<int> node_targets;
  std::vector<double> node_weights;
  std::vector<int> edge_targets;
  std::vector<double> edge_weights;
};

LossTargets loss_targets(const CellGraph& clean, double lambda) {
  const int n = clean.num_nodes();
  LossTargets lt{clean.ops, std::vector<double>(n, 1.0), std::vector<int>(n * n, 0), std::vector<double>(n * n, 0.0)};
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      lt.edge_targets[pair_row(i, j, n)] = clean.edges(i, j);
      lt.edge_weights[pair_row(i, j, n)] = lambda;
    }
  return lt;
}

Var sample_loss(Network& net, const TrainingExample& ex, int num_ops, int num_edge_types,
                double lambda) {
  const auto onehot = encode_onehot(ex.noisy, num_ops, num_edge_types);
  auto logits = net.build(onehot, ex.t, ex.cond);
  const auto lt = loss_targets(ex.clean, lambda);
  Var node_ce = ad::softmax_cross_entropy(logits.nodes, lt.node_targets, lt.node_weights);
  Var edge_ce = ad::softmax_cross_entropy(logits.edges, lt.edge_targets, lt.edge_weights);
  return ad::add(node_ce, edge_ce);
}

void check_example(const TrainingExample& ex, std::size_t index) {
  if (ex.noisy.num_nodes() != ex.clean.num_nodes()) {
    throw std::invalid_argument("training example " + std::to_string(index) + ": noisy/clean size mismatch");
  }
}

}  // namespace

PredictedProbs forward(const DenoiserParams& params, const OneHotCell& noisy, int t, const ConditionVector& cond) {
  Tape tape(false);
  Network net(tape, params, nullptr);
  const auto logits = net.build(noisy, t, cond);
  return {ad::softmax_rows(tape.value(logits.nodes)), ad::softmax_rows(tape.value(logits.edges))};
}

PredictedProbs forward(const DenoiserParams& params, const CellGraph& noisy, int t, const ConditionVector& cond) {
  return forward(params, encode_onehot(noisy, params.shape.num_ops, params.shape.num_edge_types), t, cond);
}

double loss(const PredictedProbs& predicted, const OneHotCell& clean, double lambda, LossDiagnostics* diag) {
  const int n = clean.num_nodes();
  if (predicted.nodes.rows() != n || predicted.nodes.cols() != clean.nodes.cols() ||
      predicted.edges.rows() != clean.edges.rows() || predicted.edges.cols() != clean.edges.cols()) {
    throw std::invalid_argument("loss: prediction and target shapes differ");
  }
  if (lambda < 0.0) throw std::invalid_argument("loss: lambda must be non-negative");
  auto ce = [&](const auto& prob_row, const auto& target_row) {
    Eigen::Index truth;
    target_row.maxCoeff(&truth);
    double p = prob_row(truth);
    if (p < 1e-12) {
      p = 1e-12;
      if (diag) ++diag->floored;
    }
    return -std::log(p);
  };
  double node_total = 0.0;
  for (int i = 0; i < n; ++i) node_total += ce(predicted.nodes.row(i), clean.nodes.row(i));
  double edge_total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      edge_total += ce(predicted.edges.row(pair_row(i, j, n)), clean.edges.row(pair_row(i, j, n)));
  return node_total + lambda * edge_total;
}

GradResult grad(const DenoiserParams& params, std::span<const TrainingExample> batch, double lambda,
                Rng* dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("grad: empty batch");
  GradResult result{0.0, params.zeros_like()};
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    check_example(batch[s], s);
    Tape tape(true);
    Network net(tape, params, dropout_rng);
    Var l = sample_loss(net, batch[s], params.shape.num_ops, params.shape.num_edge_types, lambda);
    const double value = tape.value(l)(0, 0);
    if (!std::isfinite(value)) {
      throw std::domain_error("non-finite loss at batch sample " + std::to_string(s));
    }
    result.mean_loss += value * inv;
    tape.backward(l);
    for (const auto& [name, var] : net.vars()) {
      if (tape.has_grad(var)) result.grads[name] += inv * tape.grad(var);
    }
  }
  return result;
}

double batch_loss(const DenoiserParams& params, std::span<const TrainingExample> batch, double lambda) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  double total = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    check_example(batch[s], s);
    Tape tape(false);
    Network net(tape, params, nullptr);
    Var l = sample_loss(net, batch[s], params.shape.num_ops, params.shape.num_edge_types, lambda);
    total += tape.value(l)(0, 0);
  }
  return total / static_cast<double>(batch.size());
}

nlohmann::json config_to_json(const DenoiserConfig& c) {
  return {{"n_layers", c.n_layers}, {"hidden_dim", c.hidden_dim}, {"n_heads", c.n_heads}, {"pe_dim", c.pe_dim},
          {"edge_dim", c.edge_dim}, {"ffn_dim", c.ffn_dim},       {"dropout", c.dropout}};
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.n_layers = j.value("n_layers", c.n_layers);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.pe_dim = j.value("pe_dim", c.hidden_dim);
  c.edge_dim = j.value("edge_dim", c.hidden_dim);
  c.ffn_dim = j.value("ffn_dim", 2 * c.hidden_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.check();
  return c;
}

nlohmann::json checkpoint_to_json(const DenoiserParams& params, const std::string& schema_hash) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, m] : params.tensors) {
    std::vector<double> data(m.data(), m.data() + m.size());
    tensors[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
  }
  return {{"format", "dinas-checkpoint/1"},
          {"config", config_to_json(params.config)},
          {"shape",
           {{"num_ops", params.shape.num_ops},
            {"num_edge_types", params.shape.num_edge_types},
            {"condition_classes", params.shape.condition_classes},
            {"diffusion_steps", params.shape.diffusion_steps}}},
          {"schema_hash", schema_hash},
          {"params", std::move(tensors)}};
}

DenoiserParams checkpoint_from_json(const nlohmann::json& j, const std::string& expected_schema_hash) {
  if (j.value("format", std::string()) != "dinas-checkpoint/1") {
    throw std::runtime_error("not a dinas checkpoint");
  }
  const auto stored_hash = j.at("schema_hash").get<std::string>();
  if (!expected_schema_hash.empty() && stored_hash != expected_schema_hash) {
    throw std::runtime_error("checkpoint schema hash " + stored_hash + " does not match manifest schema " +
                             expected_schema_hash);
  }
  DenoiserParams p;
  p.config = denoiser_config_from_json(j.at("config"));
  const auto& s = j.at("shape");
  p.shape.num_ops = s.at("num_ops").get<int>();
  p.shape.num_edge_types = s.at("num_edge_types").get<int>();
  p.shape.condition_classes = s.at("condition_classes").get<std::vector<int>>();
  p.shape.diffusion_steps = s.at("diffusion_steps").get<int>();
  for (const auto& [name, t] : j.at("params").items()) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    const auto data = t.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has the wrong element count");
    }
    p.tensors[name] = Eigen::Map<const Matrix>(data.data(), rows, cols);
  }
  // shapes must agree with a fresh initialization of the same config
  Rng probe(0);
  const auto reference = DenoiserParams::init(p.config, p.shape, probe);
  for (const auto& [name, m] : reference.tensors) {
    const auto it = p.tensors.find(name);
    if (it == p.tensors.end() || it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw std::runtime_error("checkpoint tensor '" + name + "' is missing or misshapen");
    }
  }
  return p;
}

}  // namespace dinas
