// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "agfn/environments.hpp"
#include "agfn/error.hpp"
#include "agfn/model.hpp"
#include "agfn/objectives.hpp"
#include "agfn/trainer.hpp"

// Run configuration files: one `key = value` per line with dotted keys
// (env., objective., schedule., model., train., sweep., analyze.). A line
// `[section]` prefixes the following bare keys with `section.`. '#' starts a
// comment. Unknown keys are errors.

namespace agfn {

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct AppConfig {
  RunConfig run;
  std::vector<double> sweep_alphas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::uint64_t> sweep_seeds{0, 1, 2, 3, 4};
  std::vector<double> analyze_alphas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double analyze_tolerance = 1e-8;
};

/// Shortest of %.15g, %.16g, %.17g that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  for (int digits = 15; digits < 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  if (v == "nan" || v == "auto") return std::numeric_limits<double>::quiet_NaN();
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

template <class T>
inline std::string join_uints(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct KeyDef {
  const char* name;
  const char* help;
  std::function<void(AppConfig&, const std::string&)> set;
  std::function<std::string(const AppConfig&)> get;
};

template <class F>
KeyDef real_key(const char* name, const char* help, F field) {
  return {name, help,
          [name, field](AppConfig& c, const std::string& v) { field(c) = parse_double(name, v); },
          [field](const AppConfig& c) { return format_double(field(const_cast<AppConfig&>(c))); }};
}

template <class F>
KeyDef uint_key(const char* name, const char* help, F field) {
  return {name, help,
          [name, field](AppConfig& c, const std::string& v) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(parse_uint(name, v));
          },
          [field](const AppConfig& c) { return std::to_string(field(const_cast<AppConfig&>(c))); }};
}

inline std::string bits_to_string(const std::vector<std::uint8_t>& b) {
  std::string s;
  for (auto v : b) s += v ? '1' : '0';
  return s;
}

inline const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> k;
    k.push_back({"env.kind", "setgen | bitseq",
                 [](AppConfig& c, const std::string& v) {
                   if (v == "setgen") c.run.env.kind = EnvKind::set_generation;
                   else if (v == "bitseq") c.run.env.kind = EnvKind::bit_sequence;
                   else throw ConfigError("env.kind: expected setgen or bitseq, got '" + v + "'");
                 },
                 [](const AppConfig& c) { return std::string(to_string(c.run.env.kind)); }});
    k.push_back(uint_key("env.seed", "seed for sampled element energies and bit-string targets",
                         [](AppConfig& c) -> auto& { return c.run.env.seed; }));
    k.push_back(uint_key("env.state_cap", "maximum number of states an environment may build",
                         [](AppConfig& c) -> auto& { return c.run.env.state_cap; }));
    k.push_back({"env.reward_exponent", "reward exponent beta (applies to the selected env.kind)",
                 [](AppConfig& c, const std::string& v) {
                   const double b = parse_double("env.reward_exponent", v);
                   c.run.env.setgen.reward_exponent = b;
                   c.run.env.bitseq.reward_exponent = b;
                 },
                 [](const AppConfig& c) {
                   return format_double(c.run.env.kind == EnvKind::bit_sequence ? c.run.env.bitseq.reward_exponent
                                                                                : c.run.env.setgen.reward_exponent);
                 }});
    k.push_back(uint_key("env.vocab_size", "set generation: number of elements",
                         [](AppConfig& c) -> auto& { return c.run.env.setgen.vocab_size; }));
    k.push_back(uint_key("env.set_capacity", "set generation: size of a finished set",
                         [](AppConfig& c) -> auto& { return c.run.env.setgen.set_capacity; }));
    k.push_back(uint_key("env.energy_group_size", "set generation: elements sharing one sampled energy",
                         [](AppConfig& c) -> auto& { return c.run.env.setgen.energy_group_size; }));
    k.push_back({"env.element_energies", "set generation: explicit comma-separated energies (empty = sample)",
                 [](AppConfig& c, const std::string& v) {
                   c.run.env.setgen.element_energies.clear();
                   for (const auto& p : split(v, ',')) c.run.env.setgen.element_energies.push_back(parse_double("env.element_energies", p));
                 },
                 [](const AppConfig& c) { return join_doubles(c.run.env.setgen.element_energies); }});
    k.push_back(real_key("env.mode_threshold", "set generation: absolute mode reward cutoff (nan = percentile rule)",
                         [](AppConfig& c) -> auto& { return c.run.env.setgen.mode_threshold; }));
    k.push_back(real_key("env.mode_threshold_percentile", "set generation: modes lie above this reward percentile",
                         [](AppConfig& c) -> auto& { return c.run.env.setgen.mode_threshold_percentile; }));
    k.push_back(uint_key("env.total_bits", "bit sequences: string length",
                         [](AppConfig& c) -> auto& { return c.run.env.bitseq.total_bits; }));
    k.push_back(uint_key("env.word_bits", "bit sequences: bits written per step",
                         [](AppConfig& c) -> auto& { return c.run.env.bitseq.word_bits; }));
    k.push_back(uint_key("env.num_modes", "bit sequences: number of sampled target strings",
                         [](AppConfig& c) -> auto& { return c.run.env.bitseq.num_modes; }));
    k.push_back({"env.modes", "bit sequences: explicit comma-separated target strings (empty = sample)",
                 [](AppConfig& c, const std::string& v) {
                   c.run.env.bitseq.modes.clear();
                   for (const auto& m : split(v, ',')) {
                     std::vector<std::uint8_t> bits;
                     for (char ch : m) {
                       if (ch != '0' && ch != '1') throw ConfigError("env.modes: targets must be 0/1 strings");
                       bits.push_back(ch == '1');
                     }
                     c.run.env.bitseq.modes.push_back(std::move(bits));
                   }
                 },
                 [](const AppConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.run.env.bitseq.modes.size(); ++i)
                     s += (i ? "," : "") + bits_to_string(c.run.env.bitseq.modes[i]);
                   return s;
                 }});
    k.push_back(uint_key("env.mode_distance_threshold", "bit sequences: a sample closer than this finds a target",
                         [](AppConfig& c) -> auto& { return c.run.env.bitseq.mode_distance_threshold; }));

    k.push_back({"objective.kind", "db | tb | subtb_lambda | fl_db | fl_subtb_lambda",
                 [](AppConfig& c, const std::string& v) {
                   try {
                     c.run.objective.kind = parse_objective_kind(v);
                   } catch (const InvalidArgument& e) {
                     throw ConfigError(std::string("objective.kind: ") + e.what());
                   }
                 },
                 [](const AppConfig& c) { return std::string(to_string(c.run.objective.kind)); }});
    k.push_back(real_key("objective.lambda", "SubTB length weight (auto = 0.99 for setgen, 1.9 for bitseq)",
                         [](AppConfig& c) -> auto& { return c.run.objective.lambda; }));
    k.push_back(real_key("schedule.alpha0", "initial alpha, held for the first stage (objective.alpha0 is an alias)",
                         [](AppConfig& c) -> auto& { return c.run.alpha0; }));
    k.push_back(real_key("schedule.stage1_fraction", "fraction of steps that keep alpha0",
                         [](AppConfig& c) -> auto& { return c.run.stage1_fraction; }));
    k.push_back(real_key("schedule.decay_rate", "exponential rate of the second-stage decay toward 0.5",
                         [](AppConfig& c) -> auto& { return c.run.decay_rate; }));

    k.push_back({"model.kind", "tabular | mlp",
                 [](AppConfig& c, const std::string& v) {
                   if (v == "tabular") c.run.model.kind = ModelKind::tabular;
                   else if (v == "mlp") c.run.model.kind = ModelKind::mlp;
                   else throw ConfigError("model.kind: expected tabular or mlp, got '" + v + "'");
                 },
                 [](const AppConfig& c) { return std::string(c.run.model.kind == ModelKind::mlp ? "mlp" : "tabular"); }});
    k.push_back({"model.backward", "uniform | learned",
                 [](AppConfig& c, const std::string& v) {
                   if (v == "uniform") c.run.model.backward = BackwardMode::uniform;
                   else if (v == "learned") c.run.model.backward = BackwardMode::learned;
                   else throw ConfigError("model.backward: expected uniform or learned, got '" + v + "'");
                 },
                 [](const AppConfig& c) {
                   return std::string(c.run.model.backward == BackwardMode::learned ? "learned" : "uniform");
                 }});
    k.push_back(uint_key("model.hidden", "MLP hidden width", [](AppConfig& c) -> auto& { return c.run.model.hidden; }));
    k.push_back(real_key("model.leaky_slope", "MLP leaky rectifier slope",
                         [](AppConfig& c) -> auto& { return c.run.model.leaky_slope; }));
    k.push_back(uint_key("model.seed", "weight initialization seed (fixed across training seeds)",
                         [](AppConfig& c) -> auto& { return c.run.model_seed; }));

    k.push_back(uint_key("train.steps", "training steps", [](AppConfig& c) -> auto& { return c.run.steps; }));
    k.push_back(uint_key("train.batch_size", "trajectories per step", [](AppConfig& c) -> auto& { return c.run.batch_size; }));
    k.push_back(real_key("train.epsilon_start", "exploration epsilon at step 1",
                         [](AppConfig& c) -> auto& { return c.run.epsilon_start; }));
    k.push_back(real_key("train.epsilon_end", "exploration epsilon at the last step",
                         [](AppConfig& c) -> auto& { return c.run.epsilon_end; }));
    k.push_back(real_key("train.lr", "Adam learning rate", [](AppConfig& c) -> auto& { return c.run.adam.lr; }));
    k.push_back(real_key("train.lr_log_z", "Adam learning rate for log Z",
                         [](AppConfig& c) -> auto& { return c.run.adam.lr_log_z; }));
    k.push_back(real_key("train.adam_beta1", "Adam first-moment decay", [](AppConfig& c) -> auto& { return c.run.adam.beta1; }));
    k.push_back(real_key("train.adam_beta2", "Adam second-moment decay", [](AppConfig& c) -> auto& { return c.run.adam.beta2; }));
    k.push_back(real_key("train.adam_epsilon", "Adam denominator stabilizer",
                         [](AppConfig& c) -> auto& { return c.run.adam.epsilon; }));
    k.push_back(real_key("train.grad_clip", "global gradient-norm clip (0 = off)",
                         [](AppConfig& c) -> auto& { return c.run.grad_clip; }));
    k.push_back(uint_key("train.eval_every", "steps between metric rows", [](AppConfig& c) -> auto& { return c.run.eval_every; }));
    k.push_back(uint_key("train.eval_samples", "greedy trajectories per evaluation",
                         [](AppConfig& c) -> auto& { return c.run.eval_samples; }));
    k.push_back(uint_key("train.topk", "K for the top-K mean reward", [](AppConfig& c) -> auto& { return c.run.topk; }));
    k.push_back(uint_key("train.seed", "sampling seed", [](AppConfig& c) -> auto& { return c.run.seed; }));
    k.push_back(uint_key("train.exact_eval_cap", "use exact Spearman when the trajectory count is at most this",
                         [](AppConfig& c) -> auto& { return c.run.exact_eval_cap; }));
    k.push_back(uint_key("train.heldout_samples", "held-out trajectories for estimated Spearman",
                         [](AppConfig& c) -> auto& { return c.run.heldout_samples; }));
    k.push_back(uint_key("train.mc_estimator_samples", "backward samples per terminating-probability estimate",
                         [](AppConfig& c) -> auto& { return c.run.mc_estimator_samples; }));

    k.push_back({"sweep.alphas", "alpha0 grid for the sweep subcommand",
                 [](AppConfig& c, const std::string& v) {
                   c.sweep_alphas.clear();
                   for (const auto& p : split(v, ',')) c.sweep_alphas.push_back(parse_double("sweep.alphas", p));
                 },
                 [](const AppConfig& c) { return join_doubles(c.sweep_alphas); }});
    k.push_back({"sweep.seeds", "training seeds for the sweep subcommand",
                 [](AppConfig& c, const std::string& v) {
                   c.sweep_seeds.clear();
                   for (const auto& p : split(v, ',')) c.sweep_seeds.push_back(parse_uint("sweep.seeds", p));
                 },
                 [](const AppConfig& c) { return join_uints(c.sweep_seeds); }});
    k.push_back({"analyze.alphas", "alpha grid for mixed-chain spectra",
                 [](AppConfig& c, const std::string& v) {
                   c.analyze_alphas.clear();
                   for (const auto& p : split(v, ',')) c.analyze_alphas.push_back(parse_double("analyze.alphas", p));
                 },
                 [](const AppConfig& c) { return join_doubles(c.analyze_alphas); }});
    k.push_back(real_key("analyze.tolerance", "criterion tolerance for the chain report",
                         [](AppConfig& c) -> auto& { return c.analyze_tolerance; }));
    return k;
  }();
  return table;
}

inline const KeyDef* find_key(std::string_view name) {
  for (const auto& k : key_table())
    if (name == k.name) return &k;
  return nullptr;
}

}  // namespace detail

/// Key/value pairs in file order; later duplicates override earlier ones.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is{std::string(text)};
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
      section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = detail::trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    out.emplace_back(std::move(key), detail::trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

inline void apply_setting(AppConfig& c, std::string key, const std::string& value) {
  if (key == "objective.alpha0") key = "schedule.alpha0";
  const auto* k = detail::find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  k->set(c, value);
}

/// Parses a `KEY=VALUE` override.
inline std::pair<std::string, std::string> parse_override(std::string_view kv) {
  const auto eq = kv.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(kv) + "' is not KEY=VALUE");
  return {detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1))};
}

inline AppConfig config_from_text(std::string_view text, const std::vector<std::string>& overrides = {}) {
  AppConfig c;
  for (const auto& [k, v] : parse_config_text(text)) apply_setting(c, k, v);
  for (const auto& o : overrides) {
    const auto [k, v] = parse_override(o);
    apply_setting(c, k, v);
  }
  return c;
}

inline AppConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str(), overrides);
}

/// Every key with its effective value; parsing the result reproduces `c`.
inline std::string format_config(const AppConfig& c) {
  std::string out;
  for (const auto& k : detail::key_table()) out += std::string(k.name) + " = " + k.get(c) + "\n";
  return out;
}

/// Commented listing of every key and its default.
inline std::string config_reference() {
  const AppConfig defaults;
  std::string out = "# Configuration keys and defaults.\n";
  std::string section;
  for (const auto& k : detail::key_table()) {
    const std::string name = k.name;
    const std::string sec = name.substr(0, name.find('.'));
    if (sec != section) {
      out += "\n";
      section = sec;
    }
    out += "# " + std::string(k.help) + "\n" + name + " = " + k.get(defaults) + "\n";
  }
  return out;
}

}  // namespace agfn
