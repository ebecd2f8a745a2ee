// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <queue>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "agfn/error.hpp"

namespace agfn {

inline constexpr std::size_t kNoState = std::numeric_limits<std::size_t>::max();
inline constexpr std::size_t kDefaultTrajectoryCap = 1'000'000;

struct Edge {
  std::size_t from;
  std::size_t to;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Pointed directed acyclic graph over densely indexed states.
///
/// Edges are identified by a dense edge id: the children of state `s` occupy
/// ids `[child_offset(s), child_offset(s) + children(s).size())` in ascending
/// child order. Construction only checks that the input is structurally
/// well formed; acyclicity and pointedness are reported by validate_pointed().
class DagGraph {
 public:
  DagGraph() = default;

  DagGraph(std::size_t num_states, std::span<const Edge> edges, std::size_t source,
           std::size_t sink, std::vector<std::string> labels = {})
      : source_(source), sink_(sink), labels_(std::move(labels)) {
    if (num_states == 0) throw InvalidArgument("DagGraph: no states");
    if (source >= num_states || sink >= num_states)
      throw InvalidArgument("DagGraph: source/sink index out of range");
    if (source == sink) throw InvalidArgument("DagGraph: source and sink coincide");
    if (!labels_.empty() && labels_.size() != num_states)
      throw InvalidArgument("DagGraph: label count does not match state count");

    std::vector<std::vector<std::size_t>> kids(num_states);
    for (const Edge& e : edges) {
      if (e.from >= num_states || e.to >= num_states)
        throw InvalidArgument("DagGraph: edge index out of range");
      kids[e.from].push_back(e.to);
    }
    child_offset_.assign(num_states + 1, 0);
    for (std::size_t s = 0; s < num_states; ++s) {
      auto& k = kids[s];
      std::sort(k.begin(), k.end());
      if (std::adjacent_find(k.begin(), k.end()) != k.end())
        throw InvalidArgument("DagGraph: duplicate edge from state " + std::to_string(s));
      child_offset_[s + 1] = child_offset_[s] + k.size();
    }
    children_.reserve(child_offset_.back());
    edge_from_.reserve(child_offset_.back());
    for (std::size_t s = 0; s < num_states; ++s)
      for (std::size_t c : kids[s]) {
        children_.push_back(c);
        edge_from_.push_back(s);
      }

    // Transpose; parents are visited in ascending order because edges are.
    std::vector<std::vector<std::size_t>> pars(num_states), par_edges(num_states);
    for (std::size_t e = 0; e < children_.size(); ++e) {
      pars[children_[e]].push_back(edge_from_[e]);
      par_edges[children_[e]].push_back(e);
    }
    parent_offset_.assign(num_states + 1, 0);
    for (std::size_t s = 0; s < num_states; ++s)
      parent_offset_[s + 1] = parent_offset_[s] + pars[s].size();
    parents_.reserve(children_.size());
    parent_edge_.reserve(children_.size());
    parent_slot_.assign(children_.size(), 0);
    for (std::size_t s = 0; s < num_states; ++s)
      for (std::size_t k = 0; k < pars[s].size(); ++k) {
        parents_.push_back(pars[s][k]);
        parent_edge_.push_back(par_edges[s][k]);
        parent_slot_[par_edges[s][k]] = k;
      }

    for (std::size_t s = 0; s < num_states; ++s)
      if (s != sink_ && std::binary_search(children(s).begin(), children(s).end(), sink_))
        terminals_.push_back(s);

    compute_topological_order();
  }

  std::size_t size() const noexcept { return child_offset_.empty() ? 0 : child_offset_.size() - 1; }
  std::size_t edge_count() const noexcept { return children_.size(); }
  std::size_t source() const noexcept { return source_; }
  std::size_t sink() const noexcept { return sink_; }

  std::span<const std::size_t> children(std::size_t s) const {
    return {children_.data() + child_offset_[s], child_offset_[s + 1] - child_offset_[s]};
  }
  std::span<const std::size_t> parents(std::size_t s) const {
    return {parents_.data() + parent_offset_[s], parent_offset_[s + 1] - parent_offset_[s]};
  }
  /// Terminal states: every state with an edge into the sink, ascending.
  std::span<const std::size_t> terminals() const { return terminals_; }
  bool is_terminal(std::size_t s) const {
    return std::binary_search(terminals_.begin(), terminals_.end(), s);
  }

  std::size_t child_offset(std::size_t s) const { return child_offset_[s]; }
  std::size_t edge_from(std::size_t e) const { return edge_from_[e]; }
  std::size_t edge_to(std::size_t e) const { return children_[e]; }
  Edge edge(std::size_t e) const { return {edge_from_[e], children_[e]}; }
  /// Position of `edge_from(e)` within `parents(edge_to(e))`.
  std::size_t parent_slot(std::size_t e) const { return parent_slot_[e]; }
  /// Edge id of the k-th parent edge of `s`.
  std::size_t parent_edge(std::size_t s, std::size_t k) const { return parent_edge_[parent_offset_[s] + k]; }

  std::optional<std::size_t> find_edge(std::size_t from, std::size_t to) const {
    if (from >= size()) return std::nullopt;
    auto kids = children(from);
    auto it = std::lower_bound(kids.begin(), kids.end(), to);
    if (it == kids.end() || *it != to) return std::nullopt;
    return child_offset_[from] + static_cast<std::size_t>(it - kids.begin());
  }

  bool is_acyclic() const noexcept { return topo_.size() == size(); }

  /// Topological order of all states; empty if the graph has a cycle.
  std::span<const std::size_t> topological_order() const {
    return is_acyclic() ? std::span<const std::size_t>(topo_) : std::span<const std::size_t>();
  }

  std::string label(std::size_t s) const {
    return labels_.empty() ? std::to_string(s) : labels_[s];
  }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(edge_count());
    for (std::size_t e = 0; e < edge_count(); ++e) out.push_back(edge(e));
    return out;
  }

 private:
  void compute_topological_order() {
    const std::size_t n = size();
    std::vector<std::size_t> indeg(n);
    for (std::size_t s = 0; s < n; ++s) indeg[s] = parents(s).size();
    // Min-index-first Kahn for a canonical order.
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t s = 0; s < n; ++s)
      if (indeg[s] == 0) ready.push(s);
    topo_.clear();
    while (!ready.empty()) {
      std::size_t s = ready.top();
      ready.pop();
      topo_.push_back(s);
      for (std::size_t c : children(s))
        if (--indeg[c] == 0) ready.push(c);
    }
  }

  std::size_t source_ = 0;
  std::size_t sink_ = 0;
  std::vector<std::size_t> child_offset_;
  std::vector<std::size_t> children_;
  std::vector<std::size_t> edge_from_;
  std::vector<std::size_t> parent_offset_;
  std::vector<std::size_t> parents_;
  std::vector<std::size_t> parent_edge_;
  std::vector<std::size_t> parent_slot_;
  std::vector<std::size_t> terminals_;
  std::vector<std::size_t> topo_;
  std::vector<std::string> labels_;
};

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind { cycle, source_has_parent, sink_has_child, not_on_complete_trajectory };

struct Violation {
  ViolationKind kind;
  std::size_t state;
  std::string message;
};

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::cycle: return "cycle";
    case ViolationKind::source_has_parent: return "source_has_parent";
    case ViolationKind::sink_has_child: return "sink_has_child";
    case ViolationKind::not_on_complete_trajectory: return "not_on_complete_trajectory";
  }
  return "unknown";
}

namespace detail {

inline std::vector<char> reachable(const DagGraph& g, std::size_t start, bool forward) {
  std::vector<char> seen(g.size(), 0);
  std::vector<std::size_t> stack{start};
  seen[start] = 1;
  while (!stack.empty()) {
    std::size_t s = stack.back();
    stack.pop_back();
    for (std::size_t n : forward ? g.children(s) : g.parents(s))
      if (!seen[n]) {
        seen[n] = 1;
        stack.push_back(n);
      }
  }
  return seen;
}

}  // namespace detail

/// Returns one descriptor per violated pointedness rule; empty means valid.
inline std::vector<Violation> validate_pointed(const DagGraph& g) {
  std::vector<Violation> out;
  if (!g.is_acyclic()) {
    // States never released by Kahn's algorithm lie on or behind a cycle.
    std::vector<std::size_t> indeg(g.size());
    for (std::size_t s = 0; s < g.size(); ++s) indeg[s] = g.parents(s).size();
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < g.size(); ++s)
      if (indeg[s] == 0) stack.push_back(s);
    std::vector<char> done(g.size(), 0);
    while (!stack.empty()) {
      std::size_t s = stack.back();
      stack.pop_back();
      done[s] = 1;
      for (std::size_t c : g.children(s))
        if (--indeg[c] == 0) stack.push_back(c);
    }
    for (std::size_t s = 0; s < g.size(); ++s)
      if (!done[s]) out.push_back({ViolationKind::cycle, s, "state " + g.label(s) + " is on or downstream of a cycle"});
  }
  if (!g.parents(g.source()).empty())
    out.push_back({ViolationKind::source_has_parent, g.source(), "source has incoming edges"});
  if (!g.children(g.sink()).empty())
    out.push_back({ViolationKind::sink_has_child, g.sink(), "sink has outgoing edges"});

  auto from_source = detail::reachable(g, g.source(), true);
  auto to_sink = detail::reachable(g, g.sink(), false);
  for (std::size_t s = 0; s < g.size(); ++s)
    if (!from_source[s] || !to_sink[s])
      out.push_back({ViolationKind::not_on_complete_trajectory, s,
                     "state " + g.label(s) + " is not on any complete trajectory"});
  return out;
}

// ---------------------------------------------------------------------------
// Trajectories

struct Trajectory {
  std::vector<std::size_t> states;
  bool is_complete = false;

  std::size_t edge_count() const noexcept { return states.empty() ? 0 : states.size() - 1; }
  /// The last non-sink state of a complete trajectory.
  std::size_t terminal() const { return states.at(states.size() - 2); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Builds a trajectory, checking that consecutive states are forward edges.
inline Trajectory make_trajectory(const DagGraph& g, std::vector<std::size_t> states) {
  if (states.size() < 2) throw InvalidArgument("trajectory needs at least one edge");
  for (std::size_t k = 0; k + 1 < states.size(); ++k)
    if (!g.find_edge(states[k], states[k + 1]))
      throw InvalidArgument("trajectory step " + std::to_string(k) + " (" + std::to_string(states[k]) +
                            " -> " + std::to_string(states[k + 1]) + ") is not an edge");
  Trajectory t{std::move(states), false};
  t.is_complete = t.states.front() == g.source() && t.states.back() == g.sink();
  return t;
}

/// Every complete trajectory in lexicographic order of state indices.
inline std::vector<Trajectory> enumerate_complete_trajectories(const DagGraph& g,
                                                               std::size_t cap = kDefaultTrajectoryCap) {
  std::vector<Trajectory> out;
  std::vector<std::size_t> path{g.source()};
  std::vector<std::size_t> next{0};  // next child position per depth
  while (!path.empty()) {
    std::size_t s = path.back();
    if (s == g.sink()) {
      if (out.size() >= cap) throw CapExceeded("enumerate_complete_trajectories: cap exceeded", out.size() + 1);
      out.push_back({path, true});
      path.pop_back();
      next.pop_back();
      continue;
    }
    auto kids = g.children(s);
    if (next.back() < kids.size()) {
      std::size_t c = kids[next.back()++];
      if (path.size() > g.size()) throw InvalidArgument("enumerate_complete_trajectories: graph has a cycle");
      path.push_back(c);
      next.push_back(0);
    } else {
      path.pop_back();
      next.pop_back();
    }
  }
  return out;
}

/// All (i, j) with 0 <= i < j <= n for an n-edge trajectory, ordered by i then j.
inline std::vector<std::pair<std::size_t, std::size_t>> enumerate_subtrajectories(const Trajectory& t) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t n = t.edge_count();
  out.reserve(n * (n + 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j <= n; ++j) out.emplace_back(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Merged chain view

/// The graph with source and sink identified into one state s̄.
///
/// Merged edge `e` corresponds to DagGraph edge `e`; no edges are added or
/// dropped, only their endpoints are renamed.
struct MergedChainGraph {
  std::size_t num_states = 0;
  std::size_t merged_state = 0;                 // s̄
  std::size_t original_source = 0;
  std::size_t original_sink = 0;
  std::vector<std::size_t> from_original;       // original index -> merged index
  std::vector<std::size_t> to_original;         // merged index -> original (s̄ -> source)
  std::vector<Edge> edges;                      // merged endpoints, aligned with DagGraph edge ids

  std::size_t size() const noexcept { return num_states; }
};

inline MergedChainGraph merge_terminal(const DagGraph& g) {
  MergedChainGraph mg;
  mg.num_states = g.size() - 1;
  mg.original_source = g.source();
  mg.original_sink = g.sink();
  mg.from_original.resize(g.size());
  for (std::size_t s = 0; s < g.size(); ++s)
    mg.from_original[s] = s < g.sink() ? s : (s > g.sink() ? s - 1 : kNoState);
  mg.merged_state = mg.from_original[g.source()];
  mg.from_original[g.sink()] = mg.merged_state;
  mg.to_original.resize(mg.num_states);
  for (std::size_t s = 0; s < g.size(); ++s)
    if (s != g.sink()) mg.to_original[mg.from_original[s]] = s;
  mg.edges.reserve(g.edge_count());
  for (std::size_t e = 0; e < g.edge_count(); ++e)
    mg.edges.push_back({mg.from_original[g.edge_from(e)], mg.from_original[g.edge_to(e)]});
  return mg;
}

/// Maps a merged edge back to its original endpoints (edges into s̄ return to the sink).
inline Edge unmerge_edge(const MergedChainGraph& mg, const Edge& merged) {
  return {mg.to_original[merged.from],
          merged.to == mg.merged_state ? mg.original_sink : mg.to_original[merged.to]};
}

// ---------------------------------------------------------------------------
// Text dump: `source <idx>`, `sink <idx>`, `edge <from> <to>`; '#' starts a comment.

inline void write_dag_dump(std::ostream& os, const DagGraph& g) {
  os << "source " << g.source() << "\nsink " << g.sink() << "\n";
  for (std::size_t e = 0; e < g.edge_count(); ++e) os << "edge " << g.edge_from(e) << ' ' << g.edge_to(e) << "\n";
}

inline DagGraph read_dag_dump(std::istream& is) {
  std::optional<std::size_t> source, sink;
  std::vector<Edge> edges;
  std::size_t max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto bad = [&] { return InvalidArgument("dag dump line " + std::to_string(line_no) + ": malformed"); };
    if (key == "source" || key == "sink") {
      std::size_t v;
      if (!(ls >> v)) throw bad();
      (key == "source" ? source : sink) = v;
      max_index = std::max(max_index, v);
    } else if (key == "edge") {
      Edge e;
      if (!(ls >> e.from >> e.to)) throw bad();
      edges.push_back(e);
      max_index = std::max({max_index, e.from, e.to});
    } else {
      throw bad();
    }
  }
  if (!source || !sink) throw InvalidArgument("dag dump: missing source or sink header");
  return DagGraph(max_index + 1, edges, *source, *sink);
}

}  // namespace agfn
