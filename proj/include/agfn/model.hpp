// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agfn/environments.hpp"
#include "agfn/error.hpp"
#include "agfn/graph.hpp"
#include "agfn/random.hpp"

namespace agfn {

enum class ModelKind { tabular, mlp };
enum class BackwardMode { uniform, learned };

/// Probabilities enter residuals as logs floored here.
inline const double kLogProbFloor = std::log(1e-30);

struct ModelConfig {
  ModelKind kind = ModelKind::tabular;
  BackwardMode backward = BackwardMode::uniform;
  std::size_t hidden = 64;
  double leaky_slope = 0.01;
};

struct ParamTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// All trainable state of a GFlowNet: forward/backward policy logits (or the
/// weights producing them), state log-flows and log Z.
///
/// Tabular tensors: forward_logits[edge], backward_logits[edge] (learned
/// backward only; softmax over the parent edges of the edge's target),
/// log_flow[state], log_z. MLP tensors: w0/b0, w1/b1 (trunk), pf_w/pf_b,
/// pb_w/pb_b (learned backward only), flow_w/flow_b, log_z.
struct ModelParams {
  ModelConfig config;
  std::size_t input_dim = 0;
  std::size_t num_actions = 0;
  std::vector<ParamTensor> tensors;

  const ParamTensor* find(std::string_view name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  ParamTensor* find(std::string_view name) {
    for (auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  const ParamTensor& at(std::string_view name) const {
    if (const auto* t = find(name)) return *t;
    throw InvalidArgument("no parameter tensor named " + std::string(name));
  }
  ParamTensor& at(std::string_view name) {
    if (auto* t = find(name)) return *t;
    throw InvalidArgument("no parameter tensor named " + std::string(name));
  }

  double log_z() const { return at("log_z").values[0]; }
  void set_log_z(double v) { at("log_z").values[0] = v; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.values.size();
    return n;
  }

  ModelParams zeros_like() const {
    ModelParams z = *this;
    for (auto& t : z.tensors) std::fill(t.values.begin(), t.values.end(), 0.0);
    return z;
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t i = 0; i < a.tensors.size(); ++i)
      if (a.tensors[i].name != b.tensors[i].name || a.tensors[i].values != b.tensors[i].values) return false;
    return a.config.kind == b.config.kind && a.config.backward == b.config.backward;
  }
};

inline ModelParams init_params(const Environment& env, const ModelConfig& config, std::uint64_t seed) {
  ModelParams p;
  p.config = config;
  const DagGraph& g = env.graph;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) -> ParamTensor& {
    p.tensors.push_back({std::move(name), rows, cols, std::vector<double>(rows * cols, 0.0)});
    return p.tensors.back();
  };
  if (config.kind == ModelKind::tabular) {
    add("forward_logits", g.edge_count(), 1);
    if (config.backward == BackwardMode::learned) add("backward_logits", g.edge_count(), 1);
    add("log_flow", g.size(), 1);
    add("log_z", 1, 1);
    return p;
  }

  if (config.hidden == 0) throw InvalidArgument("mlp hidden width must be positive");
  p.input_dim = env.feature_dim;
  p.num_actions = env.num_actions;
  const std::size_t h = config.hidden;
  Rng rng(seed);
  auto init_layer = [&](const char* wname, const char* bname, std::size_t out, std::size_t in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : add(wname, out, in).values) v = rng.uniform(-bound, bound);
    for (double& v : add(bname, out, 1).values) v = rng.uniform(-bound, bound);
  };
  init_layer("w0", "b0", h, p.input_dim);
  init_layer("w1", "b1", h, h);
  init_layer("pf_w", "pf_b", p.num_actions, h);
  if (config.backward == BackwardMode::learned) init_layer("pb_w", "pb_b", p.num_actions, h);
  init_layer("flow_w", "flow_b", 1, h);
  add("log_z", 1, 1);
  return p;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Model outputs at one state, in log space.
struct StateEval {
  std::vector<double> log_pf;  // over children(s), empty at the sink
  std::vector<double> log_pb;  // over parents(s), empty at the source
  double log_flow = 0.0;       // raw flow head; the source uses log Z instead
};

namespace detail {

inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline void log_softmax_inplace(std::vector<double>& v) {
  const double lse = log_sum_exp(v);
  for (double& x : v) x -= lse;
}

struct MlpActivations {
  std::vector<double> x, a0, h0, a1, h1, pf_logits, pb_logits;
  double flow = 0.0;
};

inline void dense(const ParamTensor& w, const ParamTensor& b, std::span<const double> in, std::vector<double>& out) {
  out.assign(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = b.values[r];
    const double* row = w.values.data() + r * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * in[c];
    out[r] = acc;
  }
}

inline MlpActivations mlp_forward(const ModelParams& p, const Environment& env, std::size_t s) {
  MlpActivations a;
  const double slope = p.config.leaky_slope;
  a.x.assign(p.input_dim, 0.0);
  env.features(s, a.x);
  dense(p.at("w0"), p.at("b0"), a.x, a.a0);
  a.h0 = a.a0;
  for (double& v : a.h0) v = v > 0 ? v : slope * v;
  dense(p.at("w1"), p.at("b1"), a.h0, a.a1);
  a.h1 = a.a1;
  for (double& v : a.h1) v = v > 0 ? v : slope * v;
  dense(p.at("pf_w"), p.at("pf_b"), a.h1, a.pf_logits);
  if (p.config.backward == BackwardMode::learned) dense(p.at("pb_w"), p.at("pb_b"), a.h1, a.pb_logits);
  std::vector<double> f;
  dense(p.at("flow_w"), p.at("flow_b"), a.h1, f);
  a.flow = f[0];
  return a;
}

/// Backward action of the parent edge: the action that produced `s` from that parent.
inline std::size_t parent_action(const Environment& env, std::size_t s, std::size_t k) {
  return env.edge_actions[env.graph.parent_edge(s, k)];
}

}  // namespace detail

inline StateEval evaluate_state(const ModelParams& p, const Environment& env, std::size_t s) {
  const DagGraph& g = env.graph;
  StateEval out;
  const auto kids = g.children(s);
  const auto pars = g.parents(s);

  if (p.config.kind == ModelKind::tabular) {
    const auto& fl = p.at("forward_logits").values;
    out.log_pf.assign(fl.begin() + static_cast<std::ptrdiff_t>(g.child_offset(s)),
                      fl.begin() + static_cast<std::ptrdiff_t>(g.child_offset(s) + kids.size()));
    if (p.config.backward == BackwardMode::learned && s != g.sink()) {
      const auto& bl = p.at("backward_logits").values;
      for (std::size_t k = 0; k < pars.size(); ++k) out.log_pb.push_back(bl[g.parent_edge(s, k)]);
    }
    out.log_flow = p.at("log_flow").values[s];
  } else {
    auto a = detail::mlp_forward(p, env, s);
    for (std::size_t k = 0; k < kids.size(); ++k)
      out.log_pf.push_back(a.pf_logits[env.edge_actions[g.child_offset(s) + k]]);
    if (p.config.backward == BackwardMode::learned && s != g.sink())
      for (std::size_t k = 0; k < pars.size(); ++k) out.log_pb.push_back(a.pb_logits[detail::parent_action(env, s, k)]);
    out.log_flow = a.flow;
  }
  if (!out.log_pf.empty()) detail::log_softmax_inplace(out.log_pf);

  if (s == g.sink()) {
    // Fixed terminal rule: P_B(x | s_f) = R(x) / sum R.
    out.log_pb.clear();
    for (std::size_t x : pars) out.log_pb.push_back(env.log_reward(x));
    detail::log_softmax_inplace(out.log_pb);
  } else if (!pars.empty()) {
    if (p.config.backward == BackwardMode::uniform)
      out.log_pb.assign(pars.size(), -std::log(static_cast<double>(pars.size())));
    else
      detail::log_softmax_inplace(out.log_pb);
  }
  return out;
}

inline std::vector<double> forward_dist(const ModelParams& p, const Environment& env, std::size_t s) {
  if (env.graph.children(s).empty())
    throw InvalidArgument("forward_dist: state " + std::to_string(s) + " has no children");
  auto ev = evaluate_state(p, env, s);
  for (double& v : ev.log_pf) v = std::exp(v);
  return ev.log_pf;
}

inline std::vector<double> backward_dist(const ModelParams& p, const Environment& env, std::size_t s) {
  if (s == env.graph.source()) throw InvalidArgument("backward_dist: the source has no parents");
  auto ev = evaluate_state(p, env, s);
  for (double& v : ev.log_pb) v = std::exp(v);
  return ev.log_pb;
}

/// log P_F and log P_B for every edge (P_B of an edge s->s' is P_B(s | s')).
struct EdgeLogProbs {
  std::vector<double> log_pf;
  std::vector<double> log_pb;
};

inline EdgeLogProbs edge_log_probs(const ModelParams& p, const Environment& env) {
  const DagGraph& g = env.graph;
  EdgeLogProbs out{std::vector<double>(g.edge_count()), std::vector<double>(g.edge_count())};
  for (std::size_t s = 0; s < g.size(); ++s) {
    auto ev = evaluate_state(p, env, s);
    for (std::size_t k = 0; k < ev.log_pf.size(); ++k) out.log_pf[g.child_offset(s) + k] = ev.log_pf[k];
    for (std::size_t k = 0; k < ev.log_pb.size(); ++k) out.log_pb[g.parent_edge(s, k)] = ev.log_pb[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradients

/// Adds the parameter gradient induced by upstream derivatives of the
/// log-outputs at `s` (d/d log P_F over children, d/d log P_B over parents,
/// d/d log_flow) into `grad`. Empty spans mean zero. Floored log-probs
/// receive no gradient.
inline void accumulate_state_gradient(const ModelParams& p, const Environment& env, std::size_t s,
                                      std::span<const double> d_log_pf, std::span<const double> d_log_pb,
                                      double d_log_flow, ModelParams& grad) {
  const DagGraph& g = env.graph;
  const bool learned_pb = p.config.backward == BackwardMode::learned && s != g.sink() && !d_log_pb.empty();
  const auto ev = evaluate_state(p, env, s);

  auto softmax_backward = [](std::span<const double> log_p, std::span<const double> d) {
    std::vector<double> dl(log_p.size(), 0.0);
    if (d.empty()) return dl;
    double total = 0.0;
    std::vector<double> dd(d.begin(), d.end());
    for (std::size_t k = 0; k < dd.size(); ++k)
      if (log_p[k] < kLogProbFloor) dd[k] = 0.0;
    for (double v : dd) total += v;
    for (std::size_t k = 0; k < dl.size(); ++k) dl[k] = dd[k] - std::exp(log_p[k]) * total;
    return dl;
  };
  const auto d_pf_logits = softmax_backward(ev.log_pf, d_log_pf);
  const auto d_pb_logits = learned_pb ? softmax_backward(ev.log_pb, d_log_pb) : std::vector<double>{};

  if (p.config.kind == ModelKind::tabular) {
    auto& gf = grad.at("forward_logits").values;
    for (std::size_t k = 0; k < d_pf_logits.size(); ++k) gf[g.child_offset(s) + k] += d_pf_logits[k];
    if (learned_pb) {
      auto& gb = grad.at("backward_logits").values;
      for (std::size_t k = 0; k < d_pb_logits.size(); ++k) gb[g.parent_edge(s, k)] += d_pb_logits[k];
    }
    grad.at("log_flow").values[s] += d_log_flow;
    return;
  }

  const auto a = detail::mlp_forward(p, env, s);
  const std::size_t h = p.config.hidden;
  const double slope = p.config.leaky_slope;
  std::vector<double> dh1(h, 0.0);

  auto head_backward = [&](const char* wname, const char* bname, std::size_t action, double dz) {
    if (dz == 0.0) return;
    const auto& w = p.at(wname);
    auto& gw = grad.at(wname);
    grad.at(bname).values[action] += dz;
    for (std::size_t c = 0; c < h; ++c) {
      gw(action, c) += dz * a.h1[c];
      dh1[c] += dz * w(action, c);
    }
  };
  for (std::size_t k = 0; k < d_pf_logits.size(); ++k)
    head_backward("pf_w", "pf_b", env.edge_actions[g.child_offset(s) + k], d_pf_logits[k]);
  for (std::size_t k = 0; k < d_pb_logits.size(); ++k)
    head_backward("pb_w", "pb_b", detail::parent_action(env, s, k), d_pb_logits[k]);
  head_backward("flow_w", "flow_b", 0, d_log_flow);

  std::vector<double> da1(h);
  for (std::size_t r = 0; r < h; ++r) da1[r] = dh1[r] * (a.a1[r] > 0 ? 1.0 : slope);
  const auto& w1 = p.at("w1");
  auto& gw1 = grad.at("w1");
  auto& gb1 = grad.at("b1").values;
  std::vector<double> dh0(h, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    if (da1[r] == 0.0) continue;
    gb1[r] += da1[r];
    for (std::size_t c = 0; c < h; ++c) {
      gw1(r, c) += da1[r] * a.h0[c];
      dh0[c] += da1[r] * w1(r, c);
    }
  }
  auto& gw0 = grad.at("w0");
  auto& gb0 = grad.at("b0").values;
  for (std::size_t r = 0; r < h; ++r) {
    const double da0 = dh0[r] * (a.a0[r] > 0 ? 1.0 : slope);
    if (da0 == 0.0) continue;
    gb0[r] += da0;
    for (std::size_t c = 0; c < p.input_dim; ++c)
      if (a.x[c] != 0.0) gw0(r, c) += da0 * a.x[c];
  }
}

// ---------------------------------------------------------------------------
// Sampling

/// Samples a complete trajectory from (1 - eps) P_F + eps Uniform(children).
inline Trajectory sample_trajectory(const ModelParams& p, const Environment& env, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidArgument("sample_trajectory: epsilon outside [0, 1]");
  const DagGraph& g = env.graph;
  Trajectory t{{g.source()}, true};
  std::vector<double> weights;
  std::size_t s = g.source();
  while (s != g.sink()) {
    const auto kids = g.children(s);
    if (kids.empty()) throw InvalidArgument("sample_trajectory: dead-end state " + std::to_string(s));
    weights.assign(kids.size(), epsilon / static_cast<double>(kids.size()));
    if (epsilon < 1.0) {
      const auto pf = forward_dist(p, env, s);
      for (std::size_t k = 0; k < kids.size(); ++k) weights[k] += (1.0 - epsilon) * pf[k];
    }
    s = kids[rng.categorical(weights)];
    t.states.push_back(s);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double lr = 1e-3;
  double lr_log_z = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  static OptimizerState for_params(const ModelParams& p, const AdamConfig& cfg) {
    OptimizerState s;
    s.config = cfg;
    for (const auto& t : p.tensors) {
      s.first_moment.emplace_back(t.values.size(), 0.0);
      s.second_moment.emplace_back(t.values.size(), 0.0);
    }
    return s;
  }

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

inline void check_finite(const ModelParams& grads, const char* what) {
  for (const auto& t : grads.tensors)
    for (std::size_t i = 0; i < t.values.size(); ++i)
      if (!std::isfinite(t.values[i]))
        throw NonFiniteValue(std::string("non-finite ") + what + " at " + t.name + "[" + std::to_string(i) + "]");
}

/// One bias-corrected Adam update; the log_z tensor uses its own learning rate.
inline void adam_step(ModelParams& p, const ModelParams& grads, OptimizerState& opt) {
  if (grads.tensors.size() != p.tensors.size() || opt.first_moment.size() != p.tensors.size())
    throw InvalidArgument("adam_step: tensor count mismatch");
  for (std::size_t i = 0; i < p.tensors.size(); ++i)
    if (grads.tensors[i].values.size() != p.tensors[i].values.size() ||
        opt.first_moment[i].size() != p.tensors[i].values.size())
      throw InvalidArgument("adam_step: shape mismatch for " + p.tensors[i].name);
  check_finite(grads, "gradient");

  const AdamConfig& c = opt.config;
  ++opt.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const double lr = p.tensors[i].name == "log_z" ? c.lr_log_z : c.lr;
    auto& theta = p.tensors[i].values;
    auto& m = opt.first_moment[i];
    auto& v = opt.second_moment[i];
    const auto& gv = grads.tensors[i].values;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gv[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gv[k] * gv[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      theta[k] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

/// Rescales `grads` so its global L2 norm is at most `max_norm` (no-op when max_norm <= 0).
inline double clip_gradient_norm(ModelParams& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& t : grads.tensors)
    for (double v : t.values) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& t : grads.tensors)
      for (double& v : t.values) v *= scale;
  }
  return norm;
}

}  // namespace agfn
