// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "agfn/environments.hpp"
#include "agfn/error.hpp"
#include "agfn/graph.hpp"
#include "agfn/model.hpp"

namespace agfn {

enum class ObjectiveKind { db, tb, subtb_lambda, fl_db, fl_subtb_lambda };

inline const char* to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::db: return "db";
    case ObjectiveKind::tb: return "tb";
    case ObjectiveKind::subtb_lambda: return "subtb_lambda";
    case ObjectiveKind::fl_db: return "fl_db";
    case ObjectiveKind::fl_subtb_lambda: return "fl_subtb_lambda";
  }
  return "unknown";
}

inline ObjectiveKind parse_objective_kind(std::string_view s) {
  for (auto k : {ObjectiveKind::db, ObjectiveKind::tb, ObjectiveKind::subtb_lambda, ObjectiveKind::fl_db,
                 ObjectiveKind::fl_subtb_lambda})
    if (s == to_string(k)) return k;
  throw InvalidArgument("unknown objective kind '" + std::string(s) + "'");
}

/// Objective kind plus the mixing ratio alpha and the SubTB length weight lambda.
struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::db;
  double alpha = 0.5;
  double lambda = 0.99;

  bool forward_looking() const { return kind == ObjectiveKind::fl_db || kind == ObjectiveKind::fl_subtb_lambda; }

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("objective alpha must lie in (0, 1)");
    if (!(lambda > 0.0)) throw InvalidArgument("objective lambda must be positive");
  }
};

/// Signed log-ratio of the two sides of a balance target over slice (i, j).
struct Residual {
  double value = 0.0;
  std::size_t edge_count = 0;
  std::size_t i = 0;
  std::size_t j = 0;

  double loss() const { return value * value; }
};

/// Log-domain terms of one trajectory, with the terminal conventions applied:
/// the source flow is log Z; the sink flow is zero and the terminal edge's
/// backward term carries log R(x), so that F(s_f) P_B(x | s_f) = R(x).
struct TrajectoryTerms {
  std::vector<double> log_flow;  // per position
  std::vector<double> log_pf;    // per edge, floored
  std::vector<double> log_pb;    // per edge, floored (terminal edge: log R or its FL remainder)
  std::vector<double> energy;    // per edge, zero unless forward-looking
  bool forward_looking = false;
};

inline TrajectoryTerms collect_terms(const ModelParams& p, const Environment& env, const Trajectory& t,
                                     bool forward_looking) {
  const DagGraph& g = env.graph;
  const std::size_t n = t.edge_count();
  if (n == 0) throw InvalidArgument("collect_terms: trajectory has no edges");
  TrajectoryTerms terms;
  terms.forward_looking = forward_looking;
  terms.log_flow.resize(n + 1);
  terms.log_pf.resize(n);
  terms.log_pb.resize(n);
  terms.energy.assign(n, 0.0);

  std::vector<StateEval> evals;
  evals.reserve(n + 1);
  for (std::size_t s : t.states) evals.push_back(evaluate_state(p, env, s));

  for (std::size_t k = 0; k <= n; ++k) {
    const std::size_t s = t.states[k];
    terms.log_flow[k] = s == g.source() ? p.log_z() : (s == g.sink() ? 0.0 : evals[k].log_flow);
  }
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t s = t.states[k], s_next = t.states[k + 1];
    const auto e = g.find_edge(s, s_next);
    if (!e) throw InvalidArgument("collect_terms: step " + std::to_string(k) + " is not an edge");
    terms.log_pf[k] = std::max(evals[k].log_pf[*e - g.child_offset(s)], kLogProbFloor);
    if (s_next == g.sink()) {
      terms.log_pb[k] = forward_looking ? env.fl_terminal_log_reward(s) : env.log_reward(s);
    } else {
      terms.log_pb[k] = std::max(evals[k + 1].log_pb[g.parent_slot(*e)], kLogProbFloor);
      if (forward_looking) terms.energy[k] = env.edge_energy(*e);
    }
  }
  return terms;
}

/// Slice residual without the alpha shift.
inline double vanilla_subtb_residual(const TrajectoryTerms& terms, std::size_t i, std::size_t j) {
  double v = terms.log_flow[i] - terms.log_flow[j];
  for (std::size_t e = i; e < j; ++e) v += terms.log_pf[e] - terms.log_pb[e] + terms.energy[e];
  return v;
}

/// m log(alpha) - m log(1 - alpha); exactly zero at alpha = 0.5.
inline double alpha_shift(double alpha, std::size_t m) {
  const double md = static_cast<double>(m);
  return md * std::log(alpha) - md * std::log1p(-alpha);
}

inline Residual alpha_subtb_residual(const TrajectoryTerms& terms, std::size_t i, std::size_t j, double alpha) {
  if (!(i < j && j < terms.log_flow.size()))
    throw InvalidArgument("slice (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
  return {vanilla_subtb_residual(terms, i, j) + alpha_shift(alpha, j - i), j - i, i, j};
}

inline Residual alpha_subtb_residual(const ModelParams& p, const Environment& env, const Trajectory& t,
                                     std::size_t i, std::size_t j, const ObjectiveSpec& spec) {
  spec.validate();
  if (!(i < j && j <= t.edge_count()))
    throw InvalidArgument("slice (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
  return alpha_subtb_residual(collect_terms(p, env, t, spec.forward_looking()), i, j, spec.alpha);
}

/// Forward-looking residual over a slice, regardless of the spec's kind.
inline Residual fl_residual(const ModelParams& p, const Environment& env, const Trajectory& t, std::size_t i,
                            std::size_t j, const ObjectiveSpec& spec) {
  spec.validate();
  if (!(i < j && j <= t.edge_count()))
    throw InvalidArgument("slice (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
  return alpha_subtb_residual(collect_terms(p, env, t, true), i, j, spec.alpha);
}

inline Residual db_residual(const ModelParams& p, const Environment& env, const Edge& edge, const ObjectiveSpec& spec) {
  if (!env.graph.find_edge(edge.from, edge.to))
    throw InvalidArgument("db_residual: (" + std::to_string(edge.from) + ", " + std::to_string(edge.to) +
                          ") is not an edge");
  const Trajectory t{{edge.from, edge.to}, false};
  return alpha_subtb_residual(p, env, t, 0, 1, spec);
}

inline Residual tb_residual(const ModelParams& p, const Environment& env, const Trajectory& t,
                            const ObjectiveSpec& spec) {
  if (!t.is_complete) throw InvalidArgument("tb_residual: trajectory is not complete");
  return alpha_subtb_residual(p, env, t, 0, t.edge_count(), spec);
}

/// dL_alpha / dP_F(slice), treating the product of forward probabilities over
/// the slice as one scalar variable: 2 r_alpha / P_F(slice).
inline double grad_wrt_pf_slice(const ModelParams& p, const Environment& env, const Trajectory& t, std::size_t i,
                                std::size_t j, const ObjectiveSpec& spec) {
  const auto terms = collect_terms(p, env, t, spec.forward_looking());
  const Residual r = alpha_subtb_residual(terms, i, j, spec.alpha);
  double log_pf_slice = 0.0;
  for (std::size_t e = i; e < j; ++e) log_pf_slice += terms.log_pf[e];
  return 2.0 * r.value / std::exp(log_pf_slice);
}

// ---------------------------------------------------------------------------
// Losses and exact gradients

/// d loss / d term, aligned with TrajectoryTerms.
struct TermGradients {
  std::vector<double> log_flow;
  std::vector<double> log_pf;
  std::vector<double> log_pb;

  explicit TermGradients(std::size_t edges)
      : log_flow(edges + 1, 0.0), log_pf(edges, 0.0), log_pb(edges, 0.0) {}

  /// Adds g * d(residual(i, j)) / d(terms).
  void add_slice(std::size_t i, std::size_t j, double g) {
    log_flow[i] += g;
    log_flow[j] -= g;
    for (std::size_t e = i; e < j; ++e) {
      log_pf[e] += g;
      log_pb[e] -= g;
    }
  }
};

/// Pushes term gradients through the model into `grad`.
inline void backpropagate_terms(const ModelParams& p, const Environment& env, const Trajectory& t,
                                const TermGradients& tg, ModelParams& grad) {
  const DagGraph& g = env.graph;
  const std::size_t n = t.edge_count();
  std::vector<double> d_pf, d_pb;
  for (std::size_t k = 0; k <= n; ++k) {
    const std::size_t s = t.states[k];
    d_pf.clear();
    d_pb.clear();
    if (k < n) {
      d_pf.assign(g.children(s).size(), 0.0);
      d_pf[*g.find_edge(s, t.states[k + 1]) - g.child_offset(s)] = tg.log_pf[k];
    }
    if (k > 0 && s != g.sink()) {
      d_pb.assign(g.parents(s).size(), 0.0);
      d_pb[g.parent_slot(*g.find_edge(t.states[k - 1], s))] = tg.log_pb[k - 1];
    }
    double d_flow = 0.0;
    if (s == g.source())
      grad.at("log_z").values[0] += tg.log_flow[k];
    else if (s != g.sink())
      d_flow = tg.log_flow[k];
    if (d_pf.empty() && d_pb.empty() && d_flow == 0.0) continue;
    accumulate_state_gradient(p, env, s, d_pf, d_pb, d_flow, grad);
  }
}

/// SubTB(lambda): sum over all slices of lambda^(j-i) r(i,j)^2, normalized by the weight sum.
///
/// Uses prefix sums of per-edge terms so each slice residual costs O(1).
/// If `grad` is non-null, adds `scale` times the exact gradient into it.
inline double subtb_lambda_loss(const ModelParams& p, const Environment& env, const Trajectory& t,
                                const ObjectiveSpec& spec, ModelParams* grad = nullptr, double scale = 1.0) {
  spec.validate();
  if (!t.is_complete) throw InvalidArgument("subtb_lambda_loss: trajectory is not complete");
  const auto terms = collect_terms(p, env, t, spec.forward_looking());
  const std::size_t n = t.edge_count();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t e = 0; e < n; ++e) prefix[e + 1] = prefix[e] + (terms.log_pf[e] - terms.log_pb[e] + terms.energy[e]);

  double weight_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j <= n; ++j) weight_sum += std::pow(spec.lambda, static_cast<double>(j - i));

  double loss = 0.0;
  TermGradients tg(n);
  std::vector<double> edge_diff(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j <= n; ++j) {
      const double w = std::pow(spec.lambda, static_cast<double>(j - i)) / weight_sum;
      const double r = terms.log_flow[i] - terms.log_flow[j] + (prefix[j] - prefix[i]) + alpha_shift(spec.alpha, j - i);
      loss += w * r * r;
      const double g = 2.0 * w * r * scale;
      tg.log_flow[i] += g;
      tg.log_flow[j] -= g;
      edge_diff[i] += g;
      edge_diff[j] -= g;
    }
  if (grad) {
    double running = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
      running += edge_diff[e];
      tg.log_pf[e] = running;
      tg.log_pb[e] = -running;
    }
    backpropagate_terms(p, env, t, tg, *grad);
  }
  return loss;
}

/// Loss of one sampled trajectory under the configured objective:
/// DB variants average r^2 over the trajectory's edges, TB uses the full
/// slice, SubTB(lambda) variants use the lambda-weighted slice average.
inline double trajectory_loss(const ModelParams& p, const Environment& env, const Trajectory& t,
                              const ObjectiveSpec& spec, ModelParams* grad = nullptr, double scale = 1.0) {
  spec.validate();
  switch (spec.kind) {
    case ObjectiveKind::subtb_lambda:
    case ObjectiveKind::fl_subtb_lambda:
      return subtb_lambda_loss(p, env, t, spec, grad, scale);
    case ObjectiveKind::tb: {
      if (!t.is_complete) throw InvalidArgument("TB needs a complete trajectory");
      const auto terms = collect_terms(p, env, t, false);
      const Residual r = alpha_subtb_residual(terms, 0, t.edge_count(), spec.alpha);
      if (grad) {
        TermGradients tg(t.edge_count());
        tg.add_slice(0, t.edge_count(), 2.0 * r.value * scale);
        backpropagate_terms(p, env, t, tg, *grad);
      }
      return r.loss();
    }
    case ObjectiveKind::db:
    case ObjectiveKind::fl_db: {
      const auto terms = collect_terms(p, env, t, spec.forward_looking());
      const std::size_t n = t.edge_count();
      const double w = 1.0 / static_cast<double>(n);
      double loss = 0.0;
      TermGradients tg(n);
      for (std::size_t k = 0; k < n; ++k) {
        const Residual r = alpha_subtb_residual(terms, k, k + 1, spec.alpha);
        loss += w * r.loss();
        tg.add_slice(k, k + 1, 2.0 * w * r.value * scale);
      }
      if (grad) backpropagate_terms(p, env, t, tg, *grad);
      return loss;
    }
  }
  return 0.0;
}

}  // namespace agfn
