// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agfn/environments.hpp"
#include "agfn/error.hpp"
#include "agfn/metrics.hpp"
#include "agfn/model.hpp"
#include "agfn/objectives.hpp"
#include "agfn/oracle.hpp"
#include "agfn/random.hpp"
#include "agfn/schedule.hpp"

namespace agfn {

struct EnvConfig {
  EnvKind kind = EnvKind::set_generation;
  SetGenSpec setgen;
  BitSeqSpec bitseq;
  std::uint64_t seed = 0;
  std::size_t state_cap = kDefaultStateCap;
};

inline Environment build_environment(const EnvConfig& c) {
  switch (c.kind) {
    case EnvKind::set_generation: return build_setgen(c.setgen, c.seed, c.state_cap);
    case EnvKind::bit_sequence: return build_bitseq(c.bitseq, c.seed, c.state_cap);
    case EnvKind::custom: break;
  }
  throw InvalidArgument("build_environment: custom environments are built in code, not from config");
}

struct RunConfig {
  EnvConfig env;
  /// Objective kind and lambda; alpha comes from the schedule each step.
  ObjectiveSpec objective{ObjectiveKind::db, 0.5, std::numeric_limits<double>::quiet_NaN()};
  double alpha0 = 0.5;
  double stage1_fraction = 0.9;
  double decay_rate = 4.0;
  ModelConfig model;
  AdamConfig adam;
  std::uint64_t steps = 5000;
  std::size_t batch_size = 16;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::uint64_t eval_every = 100;
  std::size_t eval_samples = 64;
  std::size_t topk = 100;
  std::uint64_t seed = 0;
  std::uint64_t model_seed = 0;
  double grad_clip = 0.0;
  /// Exact Spearman over all terminals when the trajectory count is at most this.
  std::size_t exact_eval_cap = 200'000;
  std::size_t heldout_samples = 1000;
  std::size_t mc_estimator_samples = 10;

  /// lambda when the objective leaves it unset (NaN): 0.99 for sets, 1.9 for bit strings.
  double effective_lambda() const {
    if (!std::isnan(objective.lambda)) return objective.lambda;
    return env.kind == EnvKind::bit_sequence ? 1.9 : 0.99;
  }

  void validate() const {
    if (batch_size < 1) throw InvalidArgument("train.batch_size must be at least 1");
    if (!(epsilon_end >= 0.0 && epsilon_end <= epsilon_start && epsilon_start <= 1.0))
      throw InvalidArgument("need 0 <= train.epsilon_end <= train.epsilon_start <= 1");
    if (eval_every < 1) throw InvalidArgument("train.eval_every must be at least 1");
    if (eval_samples < 1) throw InvalidArgument("train.eval_samples must be at least 1");
    if (topk < 1) throw InvalidArgument("train.topk must be at least 1");
    if (!(alpha0 > 0.0 && alpha0 < 1.0)) throw InvalidArgument("schedule.alpha0 must lie in (0, 1)");
    if (!(stage1_fraction > 0.0 && stage1_fraction <= 1.0))
      throw InvalidArgument("schedule.stage1_fraction must lie in (0, 1]");
    if (!(effective_lambda() > 0.0)) throw InvalidArgument("objective.lambda must be positive");
    if (!(adam.lr > 0.0 && adam.lr_log_z > 0.0)) throw InvalidArgument("learning rates must be positive");
  }
};

/// Linear anneal: epsilon(1) = start, epsilon(N) = end.
inline double epsilon_at(double start, double end, std::uint64_t n, std::uint64_t total) {
  if (total <= 1) return start;
  const double t = static_cast<double>(n - 1) / static_cast<double>(total - 1);
  return n == total ? end : start + (end - start) * t;
}

struct MetricsRecord {
  std::uint64_t step = 0;
  double alpha = 0.0;
  double epsilon = 0.0;
  double loss = 0.0;
  std::size_t modes = 0;
  double topk_reward = 0.0;
  double spearman = 0.0;
  double entropy = 0.0;
  double mean_length = 0.0;
  /// Mean reward of the greedy evaluation samples (not a CSV column).
  double mean_reward = 0.0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct TrainResult {
  ModelParams params;
  OptimizerState optimizer;
  std::vector<MetricsRecord> metrics;
  std::uint64_t stage1_steps = 0;
};

/// Derives independent stream seeds from one run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Spearman between the model's terminating distribution and R: exact over
/// all terminals on enumerable graphs, otherwise Monte Carlo estimates on a
/// fixed held-out set of terminals.
class SpearmanEvaluator {
 public:
  SpearmanEvaluator(const Environment& env, const ModelParams& initial, const RunConfig& cfg)
      : env_(env), mc_samples_(cfg.mc_estimator_samples) {
    exact_ = count_complete_trajectories(env.graph) <= static_cast<double>(cfg.exact_eval_cap);
    if (exact_) {
      rewards_ = env.terminal_rewards();
      return;
    }
    Rng rng(derive_seed(cfg.seed, 2));
    std::set<std::size_t> held;
    for (std::size_t i = 0; i < cfg.heldout_samples; ++i) held.insert(sample_trajectory(initial, env, 0.0, rng).terminal());
    heldout_.assign(held.begin(), held.end());
    for (std::size_t x : heldout_) rewards_.push_back(env.reward(x));
  }

  bool exact() const { return exact_; }

  double operator()(const ModelParams& p, Rng& rng) const {
    std::vector<double> probs;
    if (exact_) {
      probs = exact_terminating_probs(p, env_, std::numeric_limits<std::size_t>::max());
    } else {
      for (std::size_t x : heldout_) probs.push_back(estimate_terminating_prob(p, env_, x, mc_samples_, rng).value);
    }
    if (probs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    return spearman(probs, rewards_);
  }

 private:
  const Environment& env_;
  std::size_t mc_samples_;
  bool exact_ = false;
  std::vector<std::size_t> heldout_;
  std::vector<double> rewards_;
};

/// Scheduled training loop. Each step: alpha from the schedule, a batch of
/// epsilon-greedy trajectories, mean batch loss and exact gradient, one Adam
/// update. Metrics are recorded every eval_every steps and at the last step.
inline TrainResult train(const Environment& env, const RunConfig& cfg,
                         const std::function<void(const MetricsRecord&)>& on_eval = {}) {
  cfg.validate();
  TrainResult res;
  res.params = init_params(env, cfg.model, cfg.model_seed);
  res.optimizer = OptimizerState::for_params(res.params, cfg.adam);
  if (cfg.steps == 0) return res;

  const ScheduleSpec sched = ScheduleSpec::from_fraction(cfg.steps, cfg.stage1_fraction, cfg.alpha0, cfg.decay_rate);
  res.stage1_steps = sched.stage1_steps;
  ObjectiveSpec spec = cfg.objective;
  spec.lambda = cfg.effective_lambda();

  Rng train_rng(derive_seed(cfg.seed, 0));
  Rng eval_rng(derive_seed(cfg.seed, 1));
  const SpearmanEvaluator spearman_eval(env, res.params, cfg);
  std::vector<std::size_t> seen;  // distinct training terminals, in discovery order
  std::set<std::size_t> seen_set;

  for (std::uint64_t n = 1; n <= cfg.steps; ++n) {
    spec.alpha = alpha_at(sched, n);
    const double eps = epsilon_at(cfg.epsilon_start, cfg.epsilon_end, n, cfg.steps);
    ModelParams grads = res.params.zeros_like();
    const double w = 1.0 / static_cast<double>(cfg.batch_size);
    double loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const Trajectory t = sample_trajectory(res.params, env, eps, train_rng);
      loss += w * trajectory_loss(res.params, env, t, spec, &grads, w);
      if (seen_set.insert(t.terminal()).second) seen.push_back(t.terminal());
    }
    if (!std::isfinite(loss)) throw NonFiniteValue("non-finite loss at step " + std::to_string(n));
    clip_gradient_norm(grads, cfg.grad_clip);
    adam_step(res.params, grads, res.optimizer);

    if (n % cfg.eval_every != 0 && n != cfg.steps) continue;
    MetricsRecord rec;
    rec.step = n;
    rec.alpha = spec.alpha;
    rec.epsilon = eps;
    rec.loss = loss;
    rec.modes = count_modes(seen, env);
    rec.topk_reward = topk_mean_reward(seen, env, cfg.topk);
    std::vector<std::size_t> visited;
    double length = 0.0, reward = 0.0;
    for (std::size_t i = 0; i < cfg.eval_samples; ++i) {
      const Trajectory t = sample_trajectory(res.params, env, 0.0, eval_rng);
      length += static_cast<double>(t.edge_count());
      reward += env.reward(t.terminal());
      visited.insert(visited.end(), t.states.begin(), t.states.end() - 1);
    }
    rec.mean_length = length / static_cast<double>(cfg.eval_samples);
    rec.mean_reward = reward / static_cast<double>(cfg.eval_samples);
    rec.entropy = policy_entropy(res.params, env, visited);
    rec.spearman = spearman_eval(res.params, eval_rng);
    res.metrics.push_back(rec);
    if (on_eval) on_eval(rec);
  }
  return res;
}

inline TrainResult train(const RunConfig& cfg, const std::function<void(const MetricsRecord&)>& on_eval = {}) {
  const Environment env = build_environment(cfg.env);
  return train(env, cfg, on_eval);
}

// ---------------------------------------------------------------------------
// Full-batch fitting of alpha-DB over every edge

struct FullBatchOptions {
  std::size_t max_iterations = 200;
  double target_loss = 1e-16;
  double initial_damping = 1e-3;
};

struct FullBatchResult {
  double loss = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Mean alpha-DB loss over all edges, with the residual vector and (optionally) its Jacobian.
inline double full_batch_db(const ModelParams& p, const Environment& env, double alpha, Eigen::VectorXd& r,
                            Eigen::MatrixXd* jac) {
  const DagGraph& g = env.graph;
  r.resize(static_cast<Eigen::Index>(g.edge_count()));
  if (jac) jac->setZero(static_cast<Eigen::Index>(g.edge_count()), static_cast<Eigen::Index>(p.parameter_count()));
  ModelParams row = p.zeros_like();
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const Trajectory t{{g.edge_from(e), g.edge_to(e)}, false};
    const auto terms = collect_terms(p, env, t, false);
    r(static_cast<Eigen::Index>(e)) = alpha_subtb_residual(terms, 0, 1, alpha).value;
    if (!jac) continue;
    for (auto& tensor : row.tensors) std::fill(tensor.values.begin(), tensor.values.end(), 0.0);
    TermGradients tg(1);
    tg.add_slice(0, 1, 1.0);
    backpropagate_terms(p, env, t, tg, row);
    Eigen::Index c = 0;
    for (const auto& tensor : row.tensors)
      for (double v : tensor.values) (*jac)(static_cast<Eigen::Index>(e), c++) = v;
  }
  return r.squaredNorm() / static_cast<double>(g.edge_count());
}

/// Drives the full-batch alpha-DB loss toward zero with damped Gauss-Newton
/// (Levenberg-Marquardt) steps on the residual vector.
inline FullBatchResult fit_full_batch_db(ModelParams& p, const Environment& env, double alpha,
                                         const FullBatchOptions& opt = {}) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("fit_full_batch_db: alpha must lie in (0, 1)");
  FullBatchResult out;
  Eigen::VectorXd r, r_try;
  Eigen::MatrixXd J;
  double lambda = opt.initial_damping;
  double loss = full_batch_db(p, env, alpha, r, &J);
  for (out.iterations = 0; out.iterations < opt.max_iterations && loss >= opt.target_loss; ++out.iterations) {
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd Jtr = J.transpose() * r;
    bool improved = false;
    for (int attempt = 0; attempt < 30 && !improved; ++attempt) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal().array() += lambda;
      const Eigen::VectorXd delta = A.ldlt().solve(-Jtr);
      ModelParams trial = p;
      Eigen::Index c = 0;
      for (auto& tensor : trial.tensors)
        for (double& v : tensor.values) v += delta(c++);
      const double trial_loss = full_batch_db(trial, env, alpha, r_try, nullptr);
      if (std::isfinite(trial_loss) && trial_loss < loss) {
        p = std::move(trial);
        lambda = std::max(lambda * 0.1, 1e-15);
        improved = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
    loss = full_batch_db(p, env, alpha, r, &J);
  }
  out.loss = loss;
  out.converged = loss < opt.target_loss;
  return out;
}

}  // namespace agfn
