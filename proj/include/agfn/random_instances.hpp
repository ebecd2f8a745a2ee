// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "agfn/environments.hpp"
#include "agfn/graph.hpp"
#include "agfn/model.hpp"
#include "agfn/random.hpp"

// Seeded random instances for property checks.

namespace agfn {

struct RandomDagOptions {
  std::size_t min_inner = 2;
  std::size_t max_inner = 10;
  std::size_t max_layers = 4;
  double edge_prob = 0.4;
  /// Edges only join consecutive layers, so every complete trajectory has the same length.
  bool graded = false;
};

/// Random pointed DAG: state 0 is the source, the last state is the sink,
/// inner states sit on layers 1..L and edges point to higher layers.
inline DagGraph random_pointed_dag(Rng& rng, const RandomDagOptions& o = {}) {
  const std::size_t m = o.min_inner + rng.index(o.max_inner - o.min_inner + 1);
  const std::size_t layers = 1 + rng.index(std::min(o.max_layers, m));
  const std::size_t n = m + 2, source = 0, sink = n - 1;
  std::vector<std::size_t> layer(n);
  layer[source] = 0;
  layer[sink] = layers + 1;
  for (std::size_t i = 1; i <= m; ++i) layer[i] = i <= layers ? i : 1 + rng.index(layers);

  auto joinable = [&](std::size_t a, std::size_t b) {
    return o.graded ? layer[b] == layer[a] + 1 : layer[b] > layer[a];
  };
  std::vector<Edge> edges;
  std::vector<std::size_t> n_par(n, 0), n_kid(n, 0);
  auto add = [&](std::size_t a, std::size_t b) {
    edges.push_back({a, b});
    ++n_kid[a];
    ++n_par[b];
  };
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 1; b < n; ++b)
      if (a != b && !(a == source && b == sink) && joinable(a, b) && rng.uniform() < o.edge_prob) add(a, b);
  for (std::size_t b = 1; b <= m; ++b)
    if (n_par[b] == 0) {
      std::vector<std::size_t> cand;
      for (std::size_t a = 0; a < n; ++a)
        if (a != sink && a != b && joinable(a, b)) cand.push_back(a);
      add(cand[rng.index(cand.size())], b);
    }
  for (std::size_t a = 1; a <= m; ++a)
    if (n_kid[a] == 0) {
      std::vector<std::size_t> cand;
      for (std::size_t b = 1; b < n; ++b)
        if (b != a && joinable(a, b)) cand.push_back(b);
      add(a, cand[rng.index(cand.size())]);
    }
  if (n_kid[source] == 0) add(source, 1);
  return DagGraph(n, edges, source, sink);
}

/// Custom environment over a random DAG with rewards drawn from [lo, hi].
inline Environment random_environment(Rng& rng, const RandomDagOptions& o = {}, double lo = 0.1, double hi = 2.0) {
  DagGraph g = random_pointed_dag(rng, o);
  std::vector<double> r(g.size(), 0.0);
  for (std::size_t x : g.terminals()) r[x] = rng.uniform(lo, hi);
  return make_custom_environment(std::move(g), r);
}

/// Fills every parameter with uniform noise of the given half-width.
inline void randomize_params(ModelParams& p, Rng& rng, double scale = 1.0) {
  for (auto& t : p.tensors)
    for (double& v : t.values) v = rng.uniform(-scale, scale);
}

}  // namespace agfn
