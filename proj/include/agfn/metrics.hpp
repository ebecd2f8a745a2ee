// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "agfn/environments.hpp"
#include "agfn/error.hpp"
#include "agfn/model.hpp"
#include "agfn/random.hpp"

namespace agfn {

/// Ranks starting at 1; tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

/// Spearman rank correlation. Returns NaN when either input is constant.
inline double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("spearman: length mismatch");
  if (xs.size() < 2) throw InvalidArgument("spearman: need at least two points");
  const auto rx = average_ranks(xs), ry = average_ranks(ys);
  return pearson(rx, ry);
}

inline double entropy_of(std::span<const double> q) {
  double h = 0.0;
  for (double v : q)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

/// Mean forward-policy entropy (nats) over the given states; sink entries are skipped.
inline double policy_entropy(const ModelParams& p, const Environment& env, std::span<const std::size_t> states) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t s : states) {
    if (env.graph.children(s).empty()) continue;
    total += entropy_of(forward_dist(p, env, s));
    ++n;
  }
  if (n == 0) throw InvalidArgument("policy_entropy: no non-sink states in sample");
  return total / static_cast<double>(n);
}

/// Mean of the k largest values (all of them when fewer than k).
inline double topk_mean(std::vector<double> values, std::size_t k) {
  if (values.empty()) throw InvalidArgument("topk_mean: no values");
  const std::size_t m = std::min(k, values.size());
  std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(m), values.end(), std::greater<>());
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += values[i];
  return s / static_cast<double>(m);
}

/// Mean reward of the k best distinct terminals among `samples`.
inline double topk_mean_reward(std::span<const std::size_t> samples, const Environment& env, std::size_t k) {
  if (k == 0) throw InvalidArgument("topk_mean_reward: k must be positive");
  if (samples.empty()) throw InvalidArgument("topk_mean_reward: no samples");
  const std::set<std::size_t> distinct(samples.begin(), samples.end());
  std::vector<double> r;
  for (std::size_t x : distinct) r.push_back(env.reward(x));
  return topk_mean(r, k);
}

struct MonteCarloEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Importance-sampling estimate of P_F^T(x): the mean of P_F(tau) / P_B(tau | x)
/// over trajectories tau drawn backward from x with the model's P_B.
inline MonteCarloEstimate estimate_terminating_prob(const ModelParams& p, const Environment& env, std::size_t x,
                                                    std::size_t n_samples, Rng& rng) {
  const DagGraph& g = env.graph;
  if (!g.is_terminal(x)) throw InvalidArgument("estimate_terminating_prob: state is not terminal");
  if (n_samples == 0) throw InvalidArgument("estimate_terminating_prob: need at least one sample");
  const double log_pf_stop = evaluate_state(p, env, x).log_pf[*g.find_edge(x, g.sink()) - g.child_offset(x)];
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    double log_w = log_pf_stop;
    std::size_t s = x;
    while (s != g.source()) {
      const auto ev = evaluate_state(p, env, s);
      std::vector<double> q(ev.log_pb.size());
      for (std::size_t k = 0; k < q.size(); ++k) q[k] = std::exp(ev.log_pb[k]);
      const std::size_t k = rng.categorical(q);
      const std::size_t parent = g.parents(s)[k];
      const auto pev = evaluate_state(p, env, parent);
      log_w += pev.log_pf[*g.find_edge(parent, s) - g.child_offset(parent)] - ev.log_pb[k];
      s = parent;
    }
    const double w = std::exp(log_w);
    sum += w;
    sum_sq += w * w;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
  return {mean, std::sqrt(var / n)};
}

}  // namespace agfn
