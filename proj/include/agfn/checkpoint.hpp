// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agfn/config.hpp"
#include "agfn/error.hpp"
#include "agfn/model.hpp"
#include "agfn/trainer.hpp"

namespace agfn {

inline constexpr int kCheckpointVersion = 1;

/// Writes `content` to a sibling temporary file, then renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Checkpoint {
  ModelParams params;
  OptimizerState optimizer;
  std::uint64_t step = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  using nlohmann::json;
  json j;
  j["format"] = "agfn-checkpoint";
  j["version"] = kCheckpointVersion;
  j["step"] = c.step;
  const auto& mc = c.params.config;
  j["model"] = {{"kind", mc.kind == ModelKind::mlp ? "mlp" : "tabular"},
                {"backward", mc.backward == BackwardMode::learned ? "learned" : "uniform"},
                {"hidden", mc.hidden},
                {"leaky_slope", mc.leaky_slope},
                {"input_dim", c.params.input_dim},
                {"num_actions", c.params.num_actions}};
  json tensors = json::array();
  for (const auto& t : c.params.tensors)
    tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"values", t.values}});
  j["tensors"] = std::move(tensors);
  const auto& a = c.optimizer.config;
  j["optimizer"] = {{"lr", a.lr},
                    {"lr_log_z", a.lr_log_z},
                    {"beta1", a.beta1},
                    {"beta2", a.beta2},
                    {"epsilon", a.epsilon},
                    {"step", c.optimizer.step},
                    {"first_moment", c.optimizer.first_moment},
                    {"second_moment", c.optimizer.second_moment}};
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "agfn-checkpoint") throw Error("not a checkpoint file");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.step = j.at("step").get<std::uint64_t>();
    const auto& m = j.at("model");
    c.params.config.kind = m.at("kind") == "mlp" ? ModelKind::mlp : ModelKind::tabular;
    c.params.config.backward = m.at("backward") == "learned" ? BackwardMode::learned : BackwardMode::uniform;
    c.params.config.hidden = m.at("hidden").get<std::size_t>();
    c.params.config.leaky_slope = m.at("leaky_slope").get<double>();
    c.params.input_dim = m.at("input_dim").get<std::size_t>();
    c.params.num_actions = m.at("num_actions").get<std::size_t>();
    for (const auto& t : j.at("tensors")) {
      ParamTensor pt{t.at("name").get<std::string>(), t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>(),
                     t.at("values").get<std::vector<double>>()};
      if (pt.values.size() != pt.rows * pt.cols) throw Error("tensor " + pt.name + " has the wrong number of values");
      c.params.tensors.push_back(std::move(pt));
    }
    const auto& o = j.at("optimizer");
    c.optimizer.config = {o.at("lr").get<double>(), o.at("lr_log_z").get<double>(), o.at("beta1").get<double>(),
                          o.at("beta2").get<double>(), o.at("epsilon").get<double>()};
    c.optimizer.step = o.at("step").get<std::uint64_t>();
    c.optimizer.first_moment = o.at("first_moment").get<std::vector<std::vector<double>>>();
    c.optimizer.second_moment = o.at("second_moment").get<std::vector<std::vector<double>>>();
    if (c.optimizer.first_moment.size() != c.params.tensors.size() ||
        c.optimizer.second_moment.size() != c.params.tensors.size())
      throw Error("optimizer state does not match the parameter tensors");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, checkpoint_to_json(c).dump(1) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("cannot parse checkpoint '" + path.string() + "': " + e.what());
  }
  return checkpoint_from_json(j);
}

/// Checks that a loaded model matches the environment it is evaluated on.
inline void check_compatible(const ModelParams& p, const Environment& env) {
  const DagGraph& g = env.graph;
  if (p.config.kind == ModelKind::tabular) {
    if (p.at("forward_logits").values.size() != g.edge_count() || p.at("log_flow").values.size() != g.size())
      throw InvalidArgument("checkpoint does not match the environment's state graph");
  } else if (p.input_dim != env.feature_dim || p.num_actions != env.num_actions) {
    throw InvalidArgument("checkpoint does not match the environment's features or actions");
  }
}

inline std::string metrics_csv(const std::vector<MetricsRecord>& rows) {
  std::string out = "step,alpha,epsilon,loss,modes,topk_reward,spearman,entropy,mean_length\n";
  for (const auto& r : rows)
    out += std::to_string(r.step) + "," + format_double(r.alpha) + "," + format_double(r.epsilon) + "," +
           format_double(r.loss) + "," + std::to_string(r.modes) + "," + format_double(r.topk_reward) + "," +
           format_double(r.spearman) + "," + format_double(r.entropy) + "," + format_double(r.mean_length) + "\n";
  return out;
}

}  // namespace agfn
