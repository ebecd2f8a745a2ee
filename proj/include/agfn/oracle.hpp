// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "agfn/environments.hpp"
#include "agfn/error.hpp"
#include "agfn/graph.hpp"
#include "agfn/model.hpp"

// Brute-force ground truth on enumerable graphs. Edge-indexed probability
// vectors follow DagGraph edge ids: pf[e] = P_F(to | from) and
// pb[e] = P_B(from | to).

namespace agfn {

/// Number of complete trajectories, counted by DP (saturates at +inf).
inline double count_complete_trajectories(const DagGraph& g) {
  std::vector<double> paths(g.size(), 0.0);
  paths[g.source()] = 1.0;
  for (std::size_t s : g.topological_order())
    for (std::size_t c : g.children(s)) paths[c] += paths[s];
  return paths[g.sink()];
}

inline void require_enumerable(const DagGraph& g, std::size_t cap, const char* what) {
  if (!g.is_acyclic()) throw InvalidArgument(std::string(what) + ": graph has a cycle");
  const double n = count_complete_trajectories(g);
  if (n > static_cast<double>(cap))
    throw CapExceeded(std::string(what) + ": trajectory count exceeds cap",
                      n >= 1.8e19 ? std::numeric_limits<std::size_t>::max() : static_cast<std::size_t>(n));
}

inline std::vector<double> edge_probs(const ModelParams& p, const Environment& env, bool forward) {
  auto lp = edge_log_probs(p, env);
  auto& v = forward ? lp.log_pf : lp.log_pb;
  for (double& x : v) x = std::exp(x);
  return v;
}

/// Uniform backward policy: every parent of s' gets 1/|parents(s')|.
inline std::vector<double> uniform_backward(const DagGraph& g) {
  std::vector<double> pb(g.edge_count());
  for (std::size_t e = 0; e < g.edge_count(); ++e)
    pb[e] = 1.0 / static_cast<double>(g.parents(g.edge_to(e)).size());
  return pb;
}

/// P_F^T(x) for every terminal (ordered as g.terminals()), by pushing visit
/// probabilities through the topological order.
inline std::vector<double> exact_terminating_probs(const DagGraph& g, std::span<const double> pf,
                                                   std::size_t cap = kDefaultTrajectoryCap) {
  if (pf.size() != g.edge_count()) throw InvalidArgument("exact_terminating_probs: need one probability per edge");
  require_enumerable(g, cap, "exact_terminating_probs");
  std::vector<double> visit(g.size(), 0.0);
  visit[g.source()] = 1.0;
  for (std::size_t s : g.topological_order())
    for (std::size_t k = 0; k < g.children(s).size(); ++k)
      visit[g.children(s)[k]] += visit[s] * pf[g.child_offset(s) + k];
  std::vector<double> out;
  for (std::size_t x : g.terminals()) out.push_back(visit[x] * pf[*g.find_edge(x, g.sink())]);
  return out;
}

inline std::vector<double> exact_terminating_probs(const ModelParams& p, const Environment& env,
                                                   std::size_t cap = kDefaultTrajectoryCap) {
  return exact_terminating_probs(env.graph, edge_probs(p, env, true), cap);
}

/// Same quantity summed over explicitly enumerated trajectories.
inline std::vector<double> enumerated_terminating_probs(const DagGraph& g, std::span<const double> pf,
                                                        std::size_t cap = kDefaultTrajectoryCap) {
  const auto terms = g.terminals();
  std::vector<double> out(terms.size(), 0.0);
  for (const auto& t : enumerate_complete_trajectories(g, cap)) {
    double prob = 1.0;
    for (std::size_t k = 0; k < t.edge_count(); ++k) prob *= pf[*g.find_edge(t.states[k], t.states[k + 1])];
    out[static_cast<std::size_t>(std::lower_bound(terms.begin(), terms.end(), t.terminal()) - terms.begin())] += prob;
  }
  return out;
}

/// State flows determined by terminal rewards and a backward policy.
struct FlowTable {
  std::vector<double> flow;  // per state; flow[sink] = z
  double z = 0.0;            // F(source) = F(sink) = sum R
};

/// Reverse-topological DP: F(s) = sum over children s' of F(s') P_B(s | s'),
/// where the sink child contributes R(x) (that is, F(s_f) P_B(x | s_f)).
inline FlowTable exact_flows(const DagGraph& g, std::span<const double> rewards, std::span<const double> pb) {
  if (rewards.size() != g.size()) throw InvalidArgument("exact_flows: need one reward entry per state");
  if (pb.size() != g.edge_count()) throw InvalidArgument("exact_flows: need one probability per edge");
  if (!g.is_acyclic()) throw InvalidArgument("exact_flows: graph has a cycle");
  FlowTable ft;
  ft.flow.assign(g.size(), 0.0);
  double total = 0.0;
  for (std::size_t x : g.terminals()) {
    if (!(rewards[x] > 0.0)) throw InvalidArgument("exact_flows: terminal reward must be positive");
    total += rewards[x];
  }
  ft.flow[g.sink()] = total;
  const auto order = g.topological_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t s = *it;
    if (s == g.sink()) continue;
    double f = 0.0;
    for (std::size_t k = 0; k < g.children(s).size(); ++k) {
      const std::size_t c = g.children(s)[k];
      f += c == g.sink() ? rewards[s] : ft.flow[c] * pb[g.child_offset(s) + k];
    }
    ft.flow[s] = f;
  }
  ft.z = ft.flow[g.source()];
  return ft;
}

inline FlowTable exact_flows(const Environment& env, std::span<const double> pb) {
  std::vector<double> r(env.graph.size(), 0.0);
  for (std::size_t x : env.graph.terminals()) r[x] = env.reward(x);
  return exact_flows(env.graph, r, pb);
}

/// P_F(s' | s) = F(s') P_B(s | s') / F(s), with R(x) / F(x) on terminal edges.
inline std::vector<double> induced_forward(const DagGraph& g, const FlowTable& ft, std::span<const double> rewards,
                                           std::span<const double> pb) {
  std::vector<double> pf(g.edge_count());
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const std::size_t s = g.edge_from(e), c = g.edge_to(e);
    pf[e] = (c == g.sink() ? rewards[s] : ft.flow[c] * pb[e]) / ft.flow[s];
  }
  return pf;
}

inline std::vector<double> induced_forward(const Environment& env, const FlowTable& ft, std::span<const double> pb) {
  std::vector<double> r(env.graph.size(), 0.0);
  for (std::size_t x : env.graph.terminals()) r[x] = env.reward(x);
  return induced_forward(env.graph, ft, r, pb);
}

/// Tabular parameters realizing the given flows and policies exactly.
/// With uniform backward mode `pb` must be the uniform policy.
inline ModelParams tabular_params_from(const Environment& env, const FlowTable& ft, std::span<const double> pf,
                                       std::span<const double> pb, BackwardMode backward = BackwardMode::uniform) {
  ModelParams p = init_params(env, {ModelKind::tabular, backward}, 0);
  auto& fl = p.at("forward_logits").values;
  for (std::size_t e = 0; e < fl.size(); ++e) fl[e] = std::log(pf[e]);
  if (backward == BackwardMode::learned) {
    auto& bl = p.at("backward_logits").values;
    for (std::size_t e = 0; e < bl.size(); ++e) bl[e] = std::log(pb[e]);
  }
  auto& lf = p.at("log_flow").values;
  for (std::size_t s = 0; s < lf.size(); ++s) lf[s] = std::log(ft.flow[s]);
  p.set_log_z(std::log(ft.z));
  return p;
}

/// Worst |residual| per balance family.
struct BalanceReport {
  double db = 0.0;
  double subtb = 0.0;
  double tb = 0.0;

  bool within(double tol) const { return db <= tol && subtb <= tol && tb <= tol; }
};

/// Evaluates every alpha-balance target directly from a flow table and
/// edge policies: DB on every edge, SubTB on every slice of every complete
/// trajectory, TB on every complete trajectory. The source flow is the
/// table's F(source); slices ending at the sink use F(s_f) P_B(x|s_f) = R(x).
inline BalanceReport verify_all_balances(const DagGraph& g, const FlowTable& ft, std::span<const double> rewards,
                                         std::span<const double> pf, std::span<const double> pb, double alpha,
                                         std::size_t cap = kDefaultTrajectoryCap) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("verify_all_balances: alpha must lie in (0, 1)");
  const double la = std::log(alpha), lb = std::log(1.0 - alpha);
  // Log of one edge's forward side minus its backward side, flows excluded.
  auto edge_term = [&](std::size_t e) {
    const std::size_t s = g.edge_from(e), c = g.edge_to(e);
    const double back = c == g.sink() ? std::log(rewards[s]) : std::log(pb[e]);
    return (la + std::log(pf[e])) - (lb + back);
  };
  auto log_flow = [&](std::size_t s) { return s == g.sink() ? 0.0 : std::log(ft.flow[s]); };

  BalanceReport rep;
  for (std::size_t e = 0; e < g.edge_count(); ++e)
    rep.db = std::max(rep.db, std::abs(log_flow(g.edge_from(e)) + edge_term(e) - log_flow(g.edge_to(e))));

  for (const auto& t : enumerate_complete_trajectories(g, cap)) {
    const std::size_t n = t.edge_count();
    std::vector<double> terms(n);
    for (std::size_t k = 0; k < n; ++k) terms[k] = edge_term(*g.find_edge(t.states[k], t.states[k + 1]));
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = i + 1; j <= n; ++j) {
        acc += terms[j - 1];
        const double r = std::abs(log_flow(t.states[i]) + acc - log_flow(t.states[j]));
        rep.subtb = std::max(rep.subtb, r);
        if (i == 0 && j == n) rep.tb = std::max(rep.tb, r);
      }
    }
  }
  return rep;
}

inline BalanceReport verify_all_balances(const Environment& env, const FlowTable& ft, std::span<const double> pf,
                                         std::span<const double> pb, double alpha,
                                         std::size_t cap = kDefaultTrajectoryCap) {
  std::vector<double> r(env.graph.size(), 0.0);
  for (std::size_t x : env.graph.terminals()) r[x] = env.reward(x);
  return verify_all_balances(env.graph, ft, r, pf, pb, alpha, cap);
}

}  // namespace agfn
