// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "agfn/error.hpp"
#include "agfn/graph.hpp"
#include "agfn/random.hpp"

namespace agfn {

inline constexpr std::size_t kDefaultStateCap = 200'000;

/// Sets of fixed size built one element at a time; R(x) = prod exp(-E(e))^beta.
struct SetGenSpec {
  std::size_t vocab_size = 10;
  std::size_t set_capacity = 5;
  std::size_t energy_group_size = 2;
  double reward_exponent = 1.0;
  /// Explicit per-element energies; sampled from the seed when empty.
  std::vector<double> element_energies;
  /// Absolute reward cutoff for modes; NaN selects the percentile rule.
  double mode_threshold = std::numeric_limits<double>::quiet_NaN();
  double mode_threshold_percentile = 0.9;
};

/// Fixed-length bit strings filled one k-bit word per step, any slot order.
struct BitSeqSpec {
  std::size_t total_bits = 8;
  std::size_t word_bits = 2;
  std::size_t num_modes = 4;
  /// Explicit targets (each `total_bits` long, values 0/1); sampled when empty.
  std::vector<std::vector<std::uint8_t>> modes;
  double reward_exponent = 1.0;
  /// A sample within Hamming distance strictly below this finds a target.
  std::size_t mode_distance_threshold = 2;
};

enum class EnvKind { custom, set_generation, bit_sequence };

inline const char* to_string(EnvKind k) {
  switch (k) {
    case EnvKind::custom: return "custom";
    case EnvKind::set_generation: return "setgen";
    case EnvKind::bit_sequence: return "bitseq";
  }
  return "unknown";
}

/// A built task: the state graph plus everything the objectives and the
/// model need from the environment (rewards, energies, features, actions).
///
/// State energies satisfy E(source) = 0 and E(x) = -log R(x) on terminals, so
/// edge energies telescope to -log R(x) along any complete trajectory. Edges
/// into the sink carry zero energy.
struct Environment {
  EnvKind kind = EnvKind::custom;
  DagGraph graph;
  std::variant<std::monostate, SetGenSpec, BitSeqSpec> spec;
  /// Canonical encoding per state: sorted element list (set-gen) or slot
  /// words with -1 as the sentinel (bit-seq). Empty for the sink.
  std::vector<std::vector<int>> encodings;
  std::vector<double> log_rewards;    // per state; -inf off the terminal set
  std::vector<double> state_energies; // per state
  std::vector<std::size_t> edge_actions;
  std::size_t num_actions = 0;
  std::size_t feature_dim = 0;
  double mode_threshold = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<std::uint8_t>> modes;  // bit-seq targets

  double log_reward(std::size_t x) const { return log_rewards.at(x); }
  double reward(std::size_t x) const { return std::exp(log_rewards.at(x)); }

  std::vector<double> terminal_rewards() const {
    std::vector<double> r;
    for (std::size_t x : graph.terminals()) r.push_back(reward(x));
    return r;
  }

  double state_energy(std::size_t s) const { return state_energies.at(s); }

  double edge_energy(std::size_t e) const {
    const Edge ed = graph.edge(e);
    if (ed.to == graph.sink()) return 0.0;
    return state_energies[ed.to] - state_energies[ed.from];
  }

  double edge_energy(std::size_t s, std::size_t s_next) const {
    auto e = graph.find_edge(s, s_next);
    if (!e) throw InvalidArgument("edge_energy: (" + std::to_string(s) + ", " + std::to_string(s_next) + ") is not an edge");
    return edge_energy(*e);
  }

  /// Terminal log-reward seen by forward-looking objectives: the part of
  /// log R(x) not already delivered by the edge energies.
  double fl_terminal_log_reward(std::size_t x) const {
    return log_rewards.at(x) + state_energies.at(x) - state_energies.at(graph.source());
  }

  /// Writes the policy-network input for state `s` into `out` (size feature_dim).
  void features(std::size_t s, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    switch (kind) {
      case EnvKind::custom:
        out[s] = 1.0;
        break;
      case EnvKind::set_generation:
        for (int e : encodings[s]) out[static_cast<std::size_t>(e)] = 1.0;
        break;
      case EnvKind::bit_sequence: {
        const auto& spec_b = std::get<BitSeqSpec>(spec);
        const std::size_t width = (std::size_t{1} << spec_b.word_bits) + 1;
        for (std::size_t slot = 0; slot < encodings[s].size(); ++slot) {
          int w = encodings[s][slot];
          out[slot * width + (w < 0 ? width - 1 : static_cast<std::size_t>(w))] = 1.0;
        }
        break;
      }
    }
  }
};

// ---------------------------------------------------------------------------

/// Wraps an arbitrary pointed DAG with per-state rewards (only terminal
/// entries are read). Features are one-hot state indicators and every edge is
/// its own action. State energies are zero.
inline Environment make_custom_environment(DagGraph g, std::span<const double> rewards) {
  if (rewards.size() != g.size()) throw InvalidArgument("custom environment: need one reward entry per state");
  Environment env;
  env.kind = EnvKind::custom;
  env.log_rewards.assign(g.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t x : g.terminals()) {
    if (!(rewards[x] > 0.0)) throw InvalidArgument("custom environment: terminal reward must be positive");
    env.log_rewards[x] = std::log(rewards[x]);
  }
  env.state_energies.assign(g.size(), 0.0);
  env.encodings.assign(g.size(), {});
  for (std::size_t s = 0; s < g.size(); ++s) env.encodings[s] = {static_cast<int>(s)};
  env.edge_actions.resize(g.edge_count());
  std::iota(env.edge_actions.begin(), env.edge_actions.end(), std::size_t{0});
  env.num_actions = g.edge_count();
  env.feature_dim = g.size();
  env.graph = std::move(g);
  return env;
}

namespace detail {

struct GradedChild {
  std::vector<int> state;
  std::size_t action;
};

/// Builds a graph whose states are discovered level by level from `root`.
/// State indices follow (level, lexicographic encoding); the sink is last.
template <class ChildrenFn, class TerminalFn>
void build_graded(Environment& env, std::vector<int> root, ChildrenFn&& children_of, TerminalFn&& is_terminal,
                  std::size_t stop_action, std::size_t state_cap,
                  const std::function<std::string(const std::vector<int>&)>& label_of) {
  std::vector<std::vector<int>> states{root};
  std::map<std::vector<int>, std::size_t> index{{root, 0}};
  std::vector<Edge> edges;
  std::vector<std::size_t> actions;
  std::vector<std::size_t> terminals;

  std::vector<std::size_t> level{0};
  while (!level.empty()) {
    std::set<std::vector<int>> next;
    std::vector<std::pair<std::size_t, GradedChild>> pending;
    for (std::size_t s : level) {
      if (is_terminal(states[s])) terminals.push_back(s);
      for (GradedChild& c : children_of(states[s])) {
        next.insert(c.state);
        pending.emplace_back(s, std::move(c));
      }
    }
    std::vector<std::size_t> new_level;
    for (const auto& st : next) {
      if (states.size() + 1 >= state_cap) throw CapExceeded("environment state count exceeds cap", states.size() + 1);
      index.emplace(st, states.size());
      new_level.push_back(states.size());
      states.push_back(st);
    }
    for (auto& [s, c] : pending) {
      edges.push_back({s, index.at(c.state)});
      actions.push_back(c.action);
    }
    level = std::move(new_level);
  }
  const std::size_t sink = states.size();
  for (std::size_t x : terminals) {
    edges.push_back({x, sink});
    actions.push_back(stop_action);
  }
  std::vector<std::string> labels;
  for (const auto& st : states) labels.push_back(label_of(st));
  labels.emplace_back("s_f");

  env.graph = DagGraph(sink + 1, edges, 0, sink, std::move(labels));
  env.edge_actions.assign(env.graph.edge_count(), 0);
  for (std::size_t k = 0; k < edges.size(); ++k)
    env.edge_actions[*env.graph.find_edge(edges[k].from, edges[k].to)] = actions[k];
  env.encodings = std::move(states);
  env.encodings.emplace_back();
}

inline double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("percentile of empty set");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Set generation

/// Energies of `vocab` elements: one uniform [-1, 1] draw per group, tiled so
/// that each consecutive block of `group_size` elements shares a value.
inline std::vector<double> sample_element_energies(std::size_t vocab, std::size_t group_size, std::uint64_t seed) {
  if (group_size == 0) throw InvalidArgument("energy_group_size must be positive");
  Rng rng(seed);
  const std::size_t groups = (vocab + group_size - 1) / group_size;
  std::vector<double> group_values(groups);
  for (double& g : group_values) g = rng.uniform(-1.0, 1.0);
  std::vector<double> energies(vocab);
  for (std::size_t i = 0; i < vocab; ++i) energies[i] = group_values[i / group_size];
  return energies;
}

inline Environment build_setgen(const SetGenSpec& spec_in, std::uint64_t seed, std::size_t state_cap = kDefaultStateCap) {
  SetGenSpec spec = spec_in;
  if (spec.set_capacity > spec.vocab_size) throw InvalidArgument("set_capacity exceeds vocab_size");
  if (!(spec.reward_exponent > 0.0)) throw InvalidArgument("reward_exponent must be positive");
  if (spec.element_energies.empty()) {
    spec.element_energies = sample_element_energies(spec.vocab_size, spec.energy_group_size, seed);
  } else if (spec.element_energies.size() != spec.vocab_size) {
    throw InvalidArgument("element_energies must have vocab_size entries");
  }
  for (double e : spec.element_energies)
    if (!std::isfinite(e)) throw InvalidArgument("element energies must be finite");

  Environment env;
  env.kind = EnvKind::set_generation;
  const std::size_t vocab = spec.vocab_size;
  const std::size_t cap = spec.set_capacity;
  auto children_of = [&](const std::vector<int>& s) {
    std::vector<detail::GradedChild> out;
    if (s.size() >= cap) return out;
    for (std::size_t e = 0; e < vocab; ++e) {
      if (std::binary_search(s.begin(), s.end(), static_cast<int>(e))) continue;
      std::vector<int> c = s;
      c.insert(std::upper_bound(c.begin(), c.end(), static_cast<int>(e)), static_cast<int>(e));
      out.push_back({std::move(c), e});
    }
    return out;
  };
  auto is_terminal = [&](const std::vector<int>& s) { return s.size() == cap; };
  auto label_of = [](const std::vector<int>& s) {
    std::string l = "{";
    for (std::size_t k = 0; k < s.size(); ++k) l += (k ? "," : "") + std::to_string(s[k]);
    return l + "}";
  };
  detail::build_graded(env, {}, children_of, is_terminal, vocab, state_cap, label_of);

  const std::size_t n = env.graph.size();
  env.state_energies.assign(n, 0.0);
  env.log_rewards.assign(n, -std::numeric_limits<double>::infinity());
  for (std::size_t s = 0; s + 1 < n; ++s) {
    double sum = 0.0;
    for (int e : env.encodings[s]) sum += spec.element_energies[static_cast<std::size_t>(e)];
    env.state_energies[s] = spec.reward_exponent * sum;
  }
  for (std::size_t x : env.graph.terminals()) env.log_rewards[x] = -env.state_energies[x];

  env.num_actions = vocab + 1;
  env.feature_dim = vocab;
  env.mode_threshold = std::isnan(spec.mode_threshold)
                           ? detail::percentile_nearest_rank(env.terminal_rewards(), spec.mode_threshold_percentile)
                           : spec.mode_threshold;
  env.spec = std::move(spec);
  return env;
}

// ---------------------------------------------------------------------------
// Bit sequences

namespace detail {

inline std::size_t hamming(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

/// Bits of a slot-encoded state; sentinel slots are reported through `known`.
inline void unpack_slots(const std::vector<int>& slots, std::size_t k, std::vector<std::uint8_t>& bits,
                         std::vector<std::uint8_t>& known) {
  bits.assign(slots.size() * k, 0);
  known.assign(slots.size() * k, 0);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i] < 0) continue;
    for (std::size_t b = 0; b < k; ++b) {
      bits[i * k + b] = static_cast<std::uint8_t>((slots[i] >> (k - 1 - b)) & 1);
      known[i * k + b] = 1;
    }
  }
}

}  // namespace detail

/// Minimum over targets of the bit-level Hamming mismatch restricted to filled slots.
inline std::size_t masked_min_distance(const std::vector<int>& slots, std::size_t word_bits,
                                       const std::vector<std::vector<std::uint8_t>>& modes) {
  std::vector<std::uint8_t> bits, known;
  detail::unpack_slots(slots, word_bits, bits, known);
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (const auto& m : modes) {
    std::size_t d = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) d += known[i] && bits[i] != m[i];
    best = std::min(best, d);
  }
  return best;
}

inline std::vector<std::vector<std::uint8_t>> sample_modes(std::size_t total_bits, std::size_t count,
                                                            std::uint64_t seed) {
  if (total_bits >= 63) throw InvalidArgument("sample_modes: total_bits too large");
  const std::uint64_t space = std::uint64_t{1} << total_bits;
  if (count > space) throw InvalidArgument("sample_modes: more modes than strings");
  Rng rng(seed);
  std::set<std::uint64_t> chosen;
  std::vector<std::vector<std::uint8_t>> out;
  while (out.size() < count) {
    std::uint64_t v = rng.next() & (space - 1);
    if (!chosen.insert(v).second) continue;
    std::vector<std::uint8_t> bits(total_bits);
    for (std::size_t b = 0; b < total_bits; ++b) bits[b] = static_cast<std::uint8_t>((v >> (total_bits - 1 - b)) & 1);
    out.push_back(std::move(bits));
  }
  return out;
}

inline Environment build_bitseq(const BitSeqSpec& spec_in, std::uint64_t seed, std::size_t state_cap = kDefaultStateCap) {
  BitSeqSpec spec = spec_in;
  if (spec.word_bits == 0 || spec.total_bits % spec.word_bits != 0)
    throw InvalidArgument("word_bits must divide total_bits");
  if (spec.word_bits > 16) throw InvalidArgument("word_bits too large");
  if (!(spec.reward_exponent > 0.0)) throw InvalidArgument("reward_exponent must be positive");
  if (spec.modes.empty()) spec.modes = sample_modes(spec.total_bits, spec.num_modes, seed);
  spec.num_modes = spec.modes.size();
  for (const auto& m : spec.modes) {
    if (m.size() != spec.total_bits) throw InvalidArgument("mode length differs from total_bits");
    for (auto b : m)
      if (b > 1) throw InvalidArgument("mode bits must be 0 or 1");
  }
  {
    std::set<std::vector<std::uint8_t>> uniq(spec.modes.begin(), spec.modes.end());
    if (uniq.size() != spec.modes.size()) throw InvalidArgument("modes must be pairwise distinct");
  }
  const std::size_t slots = spec.total_bits / spec.word_bits;
  const std::size_t words = std::size_t{1} << spec.word_bits;
  // (words + 1)^slots states before the sink.
  double projected = std::pow(static_cast<double>(words + 1), static_cast<double>(slots));
  if (projected + 1 > static_cast<double>(state_cap))
    throw CapExceeded("bit-sequence state count exceeds cap", static_cast<std::size_t>(std::min(projected, 1e18)));

  Environment env;
  env.kind = EnvKind::bit_sequence;
  auto children_of = [&](const std::vector<int>& s) {
    std::vector<detail::GradedChild> out;
    for (std::size_t i = 0; i < slots; ++i) {
      if (s[i] >= 0) continue;
      for (std::size_t w = 0; w < words; ++w) {
        std::vector<int> c = s;
        c[i] = static_cast<int>(w);
        out.push_back({std::move(c), i * words + w});
      }
    }
    return out;
  };
  auto is_terminal = [](const std::vector<int>& s) {
    return std::all_of(s.begin(), s.end(), [](int w) { return w >= 0; });
  };
  const std::size_t k = spec.word_bits;
  auto label_of = [k](const std::vector<int>& s) {
    std::string l;
    for (int w : s)
      for (std::size_t b = 0; b < k; ++b) l += w < 0 ? '.' : static_cast<char>('0' + ((w >> (k - 1 - b)) & 1));
    return l;
  };
  // Lexicographic order on the slot vectors puts the sentinel (-1) first.
  detail::build_graded(env, std::vector<int>(slots, -1), children_of, is_terminal, slots * words, state_cap, label_of);

  const std::size_t n = env.graph.size();
  env.state_energies.assign(n, 0.0);
  env.log_rewards.assign(n, -std::numeric_limits<double>::infinity());
  for (std::size_t s = 0; s + 1 < n; ++s)
    env.state_energies[s] =
        spec.reward_exponent * static_cast<double>(masked_min_distance(env.encodings[s], k, spec.modes));
  for (std::size_t x : env.graph.terminals()) env.log_rewards[x] = -env.state_energies[x];

  env.num_actions = slots * words + 1;
  env.feature_dim = slots * (words + 1);
  env.modes = spec.modes;
  env.spec = std::move(spec);
  return env;
}

/// Bit-seq terminal state as a flat bit vector.
inline std::vector<std::uint8_t> terminal_bits(const Environment& env, std::size_t x) {
  const auto& spec = std::get<BitSeqSpec>(env.spec);
  std::vector<std::uint8_t> bits, known;
  detail::unpack_slots(env.encodings.at(x), spec.word_bits, bits, known);
  return bits;
}

/// Distinct high-reward terminals among `samples` (terminal state indices).
///
/// Set generation and custom graphs count distinct terminals whose reward
/// exceeds the mode threshold. Bit sequences count distinct targets that some
/// sample lies within the Hamming threshold of; each target counts once.
inline std::size_t count_modes(std::span<const std::size_t> samples, const Environment& env) {
  if (env.kind == EnvKind::bit_sequence) {
    const auto& spec = std::get<BitSeqSpec>(env.spec);
    std::vector<char> found(env.modes.size(), 0);
    std::set<std::size_t> seen;
    for (std::size_t x : samples) {
      if (!seen.insert(x).second) continue;
      const auto bits = terminal_bits(env, x);
      for (std::size_t m = 0; m < env.modes.size(); ++m)
        if (!found[m] && detail::hamming(bits, env.modes[m]) < spec.mode_distance_threshold) found[m] = 1;
    }
    return static_cast<std::size_t>(std::count(found.begin(), found.end(), 1));
  }
  std::set<std::size_t> hits;
  for (std::size_t x : samples)
    if (env.reward(x) > env.mode_threshold) hits.insert(x);
  return hits.size();
}

}  // namespace agfn
