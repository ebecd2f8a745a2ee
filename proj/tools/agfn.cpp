// SPDX-License-Identifier: Apache-2.0
// agfn command line: train, sweep, analyze, verify, reference.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "agfn/checkpoint.hpp"
#include "agfn/config.hpp"
#include "agfn/mc_analysis.hpp"
#include "agfn/oracle.hpp"
#include "agfn/trainer.hpp"
#include "agfn/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string seeds;
  std::string out;
  unsigned parallel = 1;
};

fs::path output_root(const Common& c, const char* sub) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("AGFN_OUT"); env && *env) return fs::path(env) / sub;
  return fs::path("agfn_runs") / sub;
}

agfn::AppConfig load(const Common& c) {
  if (c.config.empty()) return agfn::config_from_text("", c.overrides);
  return agfn::load_config(c.config, c.overrides);
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& part : agfn::detail::split(s, ',')) {
    const auto t = agfn::detail::trim(part);
    if (!t.empty()) out.push_back(agfn::detail::parse_uint("--seeds", t));
  }
  if (out.empty()) throw agfn::ConfigError("--seeds: empty seed list");
  return out;
}

json number(double v) {
  if (std::isfinite(v)) return v;
  return agfn::format_double(v);
}

json metrics_json(const agfn::MetricsRecord& r) {
  return {{"step", r.step},
          {"alpha", number(r.alpha)},
          {"epsilon", number(r.epsilon)},
          {"loss", number(r.loss)},
          {"modes", r.modes},
          {"topk_reward", number(r.topk_reward)},
          {"spearman", number(r.spearman)},
          {"entropy", number(r.entropy)},
          {"mean_length", number(r.mean_length)},
          {"mean_reward", number(r.mean_reward)}};
}

/// Runs `jobs` on at most `workers` threads; rethrows the failure of the
/// lowest-numbered failing job.
template <class F>
void run_pool(std::size_t jobs, unsigned workers, F&& body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(jobs, 1))));
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs;) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (unsigned w = 1; w < workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct RunOutput {
  agfn::MetricsRecord final;
  std::uint64_t stage1_steps = 0;
};

RunOutput train_one(const agfn::AppConfig& cfg, const fs::path& dir) {
  const auto env = agfn::build_environment(cfg.run.env);
  auto res = agfn::train(env, cfg.run);
  agfn::write_file_atomic(dir / "metrics.csv", agfn::metrics_csv(res.metrics));
  agfn::save_checkpoint(dir / "checkpoint.json", {res.params, res.optimizer, cfg.run.steps});
  agfn::write_file_atomic(dir / "config.conf", agfn::format_config(cfg));
  RunOutput out{res.metrics.empty() ? agfn::MetricsRecord{} : res.metrics.back(), res.stage1_steps};
  json summary = {{"env", agfn::to_string(cfg.run.env.kind)},
                  {"states", env.graph.size()},
                  {"terminals", env.graph.terminals().size()},
                  {"objective", agfn::to_string(cfg.run.objective.kind)},
                  {"lambda", cfg.run.effective_lambda()},
                  {"steps", cfg.run.steps},
                  {"stage1_steps", res.stage1_steps},
                  {"seed", cfg.run.seed},
                  {"final", metrics_json(out.final)}};
  agfn::write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  return out;
}

int cmd_train(const Common& c) {
  const auto base = load(c);
  const fs::path root = output_root(c, "train");
  std::vector<std::uint64_t> seeds;
  if (!c.seeds.empty()) seeds = parse_seeds(c.seeds);
  const bool per_seed = !seeds.empty();
  if (!per_seed) seeds.push_back(base.run.seed);
  std::vector<RunOutput> outs(seeds.size());
  const auto t0 = std::chrono::steady_clock::now();
  run_pool(seeds.size(), c.parallel, [&](std::size_t i) {
    auto cfg = base;
    cfg.run.seed = seeds[i];
    outs[i] = train_one(cfg, per_seed ? root / ("seed_" + std::to_string(seeds[i])) : root);
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto& f = outs[i].final;
    std::printf("seed %llu: step %llu alpha %.4f loss %.6g modes %zu top-k %.6g spearman %.4f entropy %.4f\n",
                static_cast<unsigned long long>(seeds[i]), static_cast<unsigned long long>(f.step), f.alpha, f.loss,
                f.modes, f.topk_reward, f.spearman, f.entropy);
  }
  std::printf("wrote %s (%.2f s)\n", root.string().c_str(), secs);
  return 0;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Population standard deviation; zero for a single run.
double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

int cmd_sweep(const Common& c) {
  const auto base = load(c);
  const fs::path root = output_root(c, "sweep");
  const auto seeds = c.seeds.empty() ? base.sweep_seeds : parse_seeds(c.seeds);
  const auto& alphas = base.sweep_alphas;
  if (seeds.empty() || alphas.empty()) throw agfn::ConfigError("sweep needs at least one seed and one alpha");
  const std::size_t jobs = seeds.size() * alphas.size();
  std::vector<RunOutput> outs(jobs);
  std::mutex io;
  run_pool(jobs, c.parallel, [&](std::size_t i) {
    auto cfg = base;
    const std::size_t a = i / seeds.size(), s = i % seeds.size();
    cfg.run.alpha0 = alphas[a];
    cfg.run.seed = seeds[s];
    outs[i] = train_one(cfg, root / ("alpha_" + agfn::format_double(alphas[a])) / ("seed_" + std::to_string(seeds[s])));
    std::lock_guard lock(io);
    std::printf("alpha %s seed %llu done\n", agfn::format_double(alphas[a]).c_str(),
                static_cast<unsigned long long>(seeds[s]));
  });
  std::string csv = "objective,metric,stat";
  for (double a : alphas) csv += "," + agfn::format_double(a);
  csv += "\n";
  const std::string obj = agfn::to_string(base.run.objective.kind);
  const auto emit = [&](const char* name, auto get) {
    std::vector<std::vector<double>> cells(alphas.size());
    for (std::size_t i = 0; i < jobs; ++i) cells[i / seeds.size()].push_back(get(outs[i].final));
    for (const char* stat : {"mean", "std"}) {
      csv += obj + "," + name + "," + stat;
      for (const auto& v : cells) csv += "," + agfn::format_double(stat[0] == 'm' ? mean_of(v) : std_of(v));
      csv += "\n";
    }
  };
  emit("modes", [](const agfn::MetricsRecord& r) { return static_cast<double>(r.modes); });
  emit("topk_reward", [](const agfn::MetricsRecord& r) { return r.topk_reward; });
  emit("spearman", [](const agfn::MetricsRecord& r) { return r.spearman; });
  agfn::write_file_atomic(root / "sweep.csv", csv);
  agfn::write_file_atomic(root / "config.conf", agfn::format_config(base));
  std::fputs(csv.c_str(), stdout);
  return 0;
}

int cmd_analyze(const Common& c, const std::string& checkpoint_path) {
  const auto cfg = load(c);
  const auto env = agfn::build_environment(cfg.run.env);
  agfn::ModelParams p;
  if (checkpoint_path.empty()) {
    p = agfn::init_params(env, cfg.run.model, cfg.run.model_seed);
  } else {
    p = agfn::load_checkpoint(checkpoint_path).params;
    agfn::check_compatible(p, env);
  }
  const auto mg = agfn::merge_terminal(env.graph);
  if (mg.size() > agfn::kDefaultChainCap)
    throw agfn::CapExceeded("analyze: merged chain has more states than the dense cap", mg.size());
  const auto pf = agfn::edge_probs(p, env, true);
  const auto P = agfn::build_kernel(mg, pf, 1e-9);
  const auto b = agfn::analyze_chain(P, mg.merged_state, cfg.analyze_alphas, cfg.analyze_tolerance);
  std::vector<double> pi(b.pi.data(), b.pi.data() + b.pi.size());
  json alphas = json::array();
  for (std::size_t i = 0; i < b.alphas.size(); ++i)
    alphas.push_back({{"alpha", b.alphas[i]}, {"beta", b.beta_alpha[i]}, {"period", b.period_alpha[i]}});
  json report = {{"checkpoint", checkpoint_path.empty() ? json(nullptr) : json(checkpoint_path)},
                 {"states", env.graph.size()},
                 {"merged_states", mg.size()},
                 {"merged_state", mg.merged_state},
                 {"merged_to_original", mg.to_original},
                 {"pi", pi},
                 {"stationarity_residual", agfn::stationarity_residual(P, b.pi)},
                 {"criterion",
                  {{"residuals", b.criterion.residuals},
                   {"max_abs", b.criterion.max_abs},
                   {"tolerance", b.criterion.tolerance},
                   {"is_gfnmc", b.criterion.is_gfnmc}}},
                 {"period", b.period},
                 {"beta", b.spectrum.beta},
                 {"mixed", alphas}};
  const fs::path root = output_root(c, "analyze");
  agfn::write_file_atomic(root / "report.json", report.dump(2) + "\n");
  std::printf("merged states %zu  period %zu  beta %.10f  criterion max %.3g  gfnmc %s\n", mg.size(), b.period,
              b.spectrum.beta, b.criterion.max_abs, b.criterion.is_gfnmc ? "yes" : "no");
  for (std::size_t i = 0; i < b.alphas.size(); ++i)
    std::printf("  alpha %-5s beta %.10f  period %zu\n", agfn::format_double(b.alphas[i]).c_str(), b.beta_alpha[i],
                b.period_alpha[i]);
  std::printf("wrote %s\n", (root / "report.json").string().c_str());
  return 0;
}

int cmd_verify(const Common& c, const agfn::VerifyOptions& opt) {
  const auto results = agfn::run_verify(opt);
  bool ok = true;
  json arr = json::array();
  for (const auto& r : results) {
    ok = ok && r.passed;
    std::printf("%-4s %-34s %.3e <= %.3e%s%s\n", r.passed ? "ok" : "FAIL", r.id.c_str(), r.value, r.tolerance,
                r.error.empty() ? "" : "  error: ", r.error.c_str());
    arr.push_back({{"id", r.id},
                   {"description", r.description},
                   {"value", number(r.value)},
                   {"tolerance", r.tolerance},
                   {"passed", r.passed},
                   {"error", r.error}});
  }
  if (!c.out.empty()) agfn::write_file_atomic(fs::path(c.out) / "verify.json", arr.dump(2) + "\n");
  std::printf("%s\n", ok ? "all checks passed" : "verification FAILED");
  return ok ? 0 : 1;
}

void add_common(CLI::App* sub, Common& c, bool with_seeds) {
  sub->add_option("--config", c.config, "Config file")->check(CLI::ExistingFile);
  sub->add_option("--override", c.overrides, "Setting as key=value (repeatable)")->take_all();
  if (with_seeds) {
    sub->add_option("--seeds", c.seeds, "Comma-separated seed list");
    sub->add_option("--parallel", c.parallel, "Worker threads")->check(CLI::PositiveNumber);
  }
  sub->add_option("--out", c.out, "Output directory (default $AGFN_OUT/<command>)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alpha-GFlowNet training and Markov-chain analysis"};
  app.require_subcommand(1);
  Common common;
  std::string checkpoint;
  agfn::VerifyOptions vopt;

  auto* train = app.add_subcommand("train", "Train one run (or one per --seeds entry)");
  add_common(train, common, true);
  auto* sweep = app.add_subcommand("sweep", "Seeds x alpha grid with mean/std table");
  add_common(sweep, common, true);
  auto* analyze = app.add_subcommand("analyze", "Exact Markov-chain report for a checkpoint");
  add_common(analyze, common, false);
  analyze->add_option("--checkpoint", checkpoint, "Checkpoint file (default: untrained model)")
      ->check(CLI::ExistingFile);
  auto* verify = app.add_subcommand("verify", "Run the built-in property suite");
  add_common(verify, common, false);
  verify->add_option("--tolerance-scale", vopt.tolerance_scale, "Multiply every check tolerance")
      ->check(CLI::PositiveNumber);
  verify->add_flag("--inject-perturbation", vopt.inject_flow_perturbation, "Perturb one oracle flow (negative control)");
  verify->add_option("--seed", vopt.seed, "Instance seed");
  auto* reference = app.add_subcommand("reference", "Print every config key with its default");

  CLI11_PARSE(app, argc, argv);
  try {
    if (train->parsed()) return cmd_train(common);
    if (sweep->parsed()) return cmd_sweep(common);
    if (analyze->parsed()) return cmd_analyze(common, checkpoint);
    if (verify->parsed()) return cmd_verify(common, vopt);
    if (reference->parsed()) {
      std::fputs(agfn::config_reference().c_str(), stdout);
      return 0;
    }
  } catch (const agfn::NonFiniteValue& e) {
    std::fprintf(stderr, "agfn: training diverged: %s\n", e.what());
    return 3;
  } catch (const agfn::InvalidArgument& e) {
    std::fprintf(stderr, "agfn: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "agfn: %s\n", e.what());
    return 1;
  }
  return 1;
}
