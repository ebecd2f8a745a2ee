// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "agfn/environments.hpp"
#include "agfn/graph.hpp"

namespace agfn::testing {

/// s_s -> s_f.
inline DagGraph two_state_chain() {
  const std::vector<Edge> e{{0, 1}};
  return DagGraph(2, e, 0, 1);
}

/// s_s -> {a, b} -> x -> s_f with states (s_s, a, b, x, s_f).
inline DagGraph diamond() {
  const std::vector<Edge> e{{0, 1}, {0, 2}, {1, 3}, {2, 3}, {3, 4}};
  return DagGraph(5, e, 0, 4);
}

/// s_s -> a -> b -> x -> s_f.
inline DagGraph line_graph() {
  const std::vector<Edge> e{{0, 1}, {1, 2}, {2, 3}, {3, 4}};
  return DagGraph(5, e, 0, 4);
}

/// Set generation over 3 elements, sets of 2, energies (0, ln 2, ln 4):
/// R({0,1}) = 0.5, R({0,2}) = 0.25, R({1,2}) = 0.125.
inline Environment setgen_3_2(double beta = 1.0) {
  SetGenSpec s;
  s.vocab_size = 3;
  s.set_capacity = 2;
  s.energy_group_size = 1;
  s.reward_exponent = beta;
  s.element_energies = {0.0, std::log(2.0), std::log(4.0)};
  return build_setgen(s, 0);
}

inline Environment setgen_mini(std::size_t vocab = 5, std::size_t capacity = 3, std::uint64_t seed = 0) {
  SetGenSpec s;
  s.vocab_size = vocab;
  s.set_capacity = capacity;
  s.energy_group_size = 1;
  return build_setgen(s, seed);
}

/// State index of the set with the given sorted elements.
inline std::size_t state_of(const Environment& env, std::vector<int> elems) {
  for (std::size_t s = 0; s < env.encodings.size(); ++s)
    if (s != env.graph.sink() && env.encodings[s] == elems) return s;
  return kNoState;
}

}  // namespace agfn::testing
