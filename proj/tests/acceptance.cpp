// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <numeric>
#include <string>
#include <vector>

#include "agfn/mc_analysis.hpp"
#include "agfn/metrics.hpp"
#include "agfn/objectives.hpp"
#include "agfn/oracle.hpp"
#include "agfn/random_instances.hpp"
#include "agfn/schedule.hpp"
#include "agfn/trainer.hpp"

using namespace agfn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

Environment setgen(std::size_t vocab, std::size_t cap, std::size_t group, std::uint64_t seed) {
  SetGenSpec s;
  s.vocab_size = vocab;
  s.set_capacity = cap;
  s.energy_group_size = group;
  return build_setgen(s, seed);
}

/// Default mini set generation (10 elements, sets of 5, energy groups of 2).
RunConfig mini_run() {
  RunConfig c;
  c.objective.kind = ObjectiveKind::db;
  c.model.kind = ModelKind::tabular;
  c.adam.lr = 0.01;
  return c;
}

// ---------------------------------------------------------------------------
// Hand-written residual used as an independent route

struct HandTerms {
  std::vector<double> log_flow, log_pf, log_pb;
};

HandTerms hand_terms(const ModelParams& p, const Environment& env, const Trajectory& t) {
  const auto& g = env.graph;
  HandTerms h;
  for (std::size_t k = 0; k < t.states.size(); ++k) {
    const std::size_t s = t.states[k];
    if (s == g.source()) h.log_flow.push_back(p.log_z());
    else if (s == g.sink()) h.log_flow.push_back(0.0);
    else h.log_flow.push_back(evaluate_state(p, env, s).log_flow);
  }
  for (std::size_t k = 0; k + 1 < t.states.size(); ++k) {
    const std::size_t s = t.states[k], n = t.states[k + 1];
    const auto kids = g.children(s);
    const auto ev = evaluate_state(p, env, s);
    h.log_pf.push_back(ev.log_pf[static_cast<std::size_t>(std::find(kids.begin(), kids.end(), n) - kids.begin())]);
    if (n == g.sink()) {
      h.log_pb.push_back(env.log_reward(s));
    } else {
      const auto pars = g.parents(n);
      const auto evn = evaluate_state(p, env, n);
      h.log_pb.push_back(evn.log_pb[static_cast<std::size_t>(std::find(pars.begin(), pars.end(), s) - pars.begin())]);
    }
  }
  return h;
}

double hand_residual(const HandTerms& h, std::size_t i, std::size_t j, double alpha) {
  double r = h.log_flow[i] - h.log_flow[j];
  for (std::size_t k = i; k < j; ++k) r += h.log_pf[k] - h.log_pb[k];
  return r + static_cast<double>(j - i) * std::log(alpha / (1.0 - alpha));
}

// ---------------------------------------------------------------------------

Outcome c1_oracle_proportionality() {
  double worst = 0.0;
  std::size_t terminals = 0;
  for (std::size_t vocab : {4, 5, 6})
    for (std::size_t cap : {2, 3})
      for (std::size_t group : {1, 2})
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
          const auto env = setgen(vocab, cap, group, seed);
          const auto pb = uniform_backward(env.graph);
          const auto ft = exact_flows(env, pb);
          const auto probs = exact_terminating_probs(env.graph, induced_forward(env, ft, pb));
          const auto r = env.terminal_rewards();
          const double total = std::accumulate(r.begin(), r.end(), 0.0);
          for (std::size_t i = 0; i < r.size(); ++i) worst = std::max(worst, std::abs(probs[i] - r[i] / total));
          terminals += r.size();
        }
  return {worst <= 1e-10, fmt("max |P_T(x) - R(x)/sum R| = %.2e over %.0f terminals", worst, double(terminals))};
}

Outcome c2_alpha_half_bitwise() {
  Rng rng(2);
  const std::array envs{setgen(5, 3, 1, 0), setgen(6, 3, 2, 1)};
  std::size_t checked = 0, mismatches = 0;
  double hand_worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto& env = envs[static_cast<std::size_t>(trial) % envs.size()];
    auto p = init_params(env, {ModelKind::tabular, trial % 2 ? BackwardMode::learned : BackwardMode::uniform}, 0);
    randomize_params(p, rng, 2.0);
    const auto t = sample_trajectory(p, env, 0.5, rng);
    const std::size_t i = rng.index(t.edge_count());
    const std::size_t j = i + 1 + rng.index(t.edge_count() - i);
    for (bool fl : {false, true}) {
      const auto terms = collect_terms(p, env, t, fl);
      const double van = vanilla_subtb_residual(terms, i, j);
      mismatches += alpha_subtb_residual(terms, i, j, 0.5).value != van;
      ++checked;
    }
    const ObjectiveSpec half{ObjectiveKind::db, 0.5, 0.9};
    const auto terms = collect_terms(p, env, t, false);
    mismatches += tb_residual(p, env, t, half).value != vanilla_subtb_residual(terms, 0, t.edge_count());
    mismatches += db_residual(p, env, {t.states[i], t.states[i + 1]}, half).value != vanilla_subtb_residual(terms, i, i + 1);
    checked += 2;
    hand_worst = std::max(hand_worst, std::abs(vanilla_subtb_residual(terms, i, j) - hand_residual(hand_terms(p, env, t), i, j, 0.5)));
  }
  return {mismatches == 0 && hand_worst <= 1e-12,
          fmt("%.0f bit mismatches in %.0f comparisons", double(mismatches), double(checked)) +
              fmt("; hand-computed residual agrees to %.1e", hand_worst)};
}

Outcome c3_gradient_identity() {
  Rng rng(3);
  const auto env = setgen(6, 4, 1, 3);  // 5 edges per trajectory
  const std::array alphas{0.1, 0.3, 0.7, 0.9};
  double worst_lib = 0.0, worst_hand = 0.0;
  std::size_t n = 0;
  for (int trial = 0; trial < 400; ++trial) {
    auto p = init_params(env, {ModelKind::tabular, trial % 2 ? BackwardMode::learned : BackwardMode::uniform}, 0);
    randomize_params(p, rng, 1.0);
    const auto t = sample_trajectory(p, env, 0.3, rng);
    const std::size_t m = 1 + static_cast<std::size_t>(trial) % 5;
    const std::size_t i = rng.index(t.edge_count() - m + 1), j = i + m;
    const double alpha = alphas[rng.index(alphas.size())];
    const auto h = hand_terms(p, env, t);
    double log_pf = 0.0;
    for (std::size_t k = i; k < j; ++k) log_pf += h.log_pf[k];
    const double pf = std::exp(log_pf);
    const double extra = 2.0 * static_cast<double>(m) / pf * std::log(alpha / (1.0 - alpha));
    const ObjectiveSpec sa{ObjectiveKind::db, alpha, 1.0}, s0{ObjectiveKind::db, 0.5, 1.0};
    // library route
    const double ga = grad_wrt_pf_slice(p, env, t, i, j, sa), g0 = grad_wrt_pf_slice(p, env, t, i, j, s0);
    worst_lib = std::max(worst_lib, std::abs(ga - g0 - extra) / std::max({std::abs(ga), std::abs(g0), std::abs(extra)}));
    // hand route: dL/dP_F = 2 r / P_F from the hand-computed residuals
    const double ha = 2.0 * hand_residual(h, i, j, alpha) / pf, h0 = 2.0 * hand_residual(h, i, j, 0.5) / pf;
    worst_hand = std::max(worst_hand, std::abs(ha - h0 - extra) / std::max({std::abs(ha), std::abs(h0), std::abs(extra)}));
    ++n;
  }
  return {worst_lib <= 1e-10 && worst_hand <= 1e-10,
          fmt("max relative deviation %.2e (library), %.2e (hand residual)", worst_lib, worst_hand) +
              fmt(" over %.0f slices", double(n))};
}

double fd_error(const Environment& env, ModelParams p, const Trajectory& t, const ObjectiveSpec& spec) {
  const double h = 1e-6;
  ModelParams grad = p.zeros_like();
  trajectory_loss(p, env, t, spec, &grad);
  double worst = 0.0;
  for (std::size_t ti = 0; ti < p.tensors.size(); ++ti)
    for (std::size_t k = 0; k < p.tensors[ti].values.size(); ++k) {
      const double x = p.tensors[ti].values[k];
      p.tensors[ti].values[k] = x + h;
      const double up = trajectory_loss(p, env, t, spec);
      p.tensors[ti].values[k] = x - h;
      const double down = trajectory_loss(p, env, t, spec);
      p.tensors[ti].values[k] = x;
      const double fd = (up - down) / (2.0 * h), an = grad.tensors[ti].values[k];
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3}));
    }
  return worst;
}

Outcome c4_finite_differences() {
  Rng rng(4);
  const std::array envs{setgen(5, 3, 1, 4), setgen(6, 3, 2, 5)};
  double worst = 0.0;
  std::size_t cases = 0;
  for (const auto& env : envs)
    for (auto kind : {ObjectiveKind::db, ObjectiveKind::tb, ObjectiveKind::subtb_lambda, ObjectiveKind::fl_db,
                      ObjectiveKind::fl_subtb_lambda})
      for (auto back : {BackwardMode::uniform, BackwardMode::learned})
        for (double alpha : {0.2, 0.5, 0.9}) {
          auto p = init_params(env, {ModelKind::tabular, back}, 0);
          randomize_params(p, rng, 1.0);
          const auto t = sample_trajectory(p, env, 0.5, rng);
          worst = std::max(worst, fd_error(env, p, t, {kind, alpha, 0.9}));
          ++cases;
        }
  return {worst <= 1e-5, fmt("max relative error %.2e over %.0f objective/instance cases", worst, double(cases))};
}

/// Reverses a random edge v -> u of the chain that avoids s̄ (or adds a self-loop).
Matrix with_inner_loop(Matrix P, std::size_t sbar, Rng& rng) {
  const auto n = static_cast<std::size_t>(P.rows());
  std::size_t u = sbar;
  while (u == sbar) u = rng.index(n);
  std::size_t v = u;
  for (std::size_t w = 0; w < n; ++w)
    if (w != sbar && P(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(u)) > 0.0 && rng.uniform() < 0.7) v = w;
  P.row(static_cast<Eigen::Index>(u)) *= 0.6;
  P(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) += 0.4;
  return P;
}

Outcome c5_markov_chain_identities() {
  Rng rng(5);
  double stat = 0.0, spectrum = 0.0, mixed = 0.0, crit = 0.0;
  std::size_t disagreements = 0, period_errors = 0, negatives = 0;
  for (int trial = 0; trial < 100; ++trial) {
    RandomDagOptions o;
    o.max_inner = 48;
    o.min_inner = 10;
    o.max_layers = 6;
    o.graded = trial % 2 == 0;
    const auto env = random_environment(rng, o);
    auto p = init_params(env, {}, 0);
    randomize_params(p, rng, 1.5);
    const auto mg = merge_terminal(env.graph);
    const Matrix P = build_kernel(mg, edge_probs(p, env, true));
    const Vector pi = stationary(P);
    stat = std::max(stat, stationarity_residual(P, pi));
    const Matrix R = reversed_kernel(P, pi);
    Matrix a = P, b = R;
    for (Eigen::Index k = 1; k <= P.rows(); ++k) {
      spectrum = std::max(spectrum, std::abs(a.trace() - b.trace()));
      a = a * P;
      b = b * R;
    }
    for (double al : {0.1, 0.3, 0.7, 0.9}) mixed = std::max(mixed, stationarity_residual(mixed_kernel(P, R, al), pi));
    const auto rep = gfnmc_criterion(pi, fundamental_matrix(P, pi), mg.merged_state);
    crit = std::max(crit, rep.max_abs);
    disagreements += rep.is_gfnmc != brute_force_is_gfnmc(P, mg.merged_state) || !rep.is_gfnmc;

    const Matrix Q = with_inner_loop(P, mg.merged_state, rng);
    const Vector qpi = stationary(Q);
    const auto qrep = gfnmc_criterion(qpi, fundamental_matrix(Q, qpi), mg.merged_state);
    const bool brute = brute_force_is_gfnmc(Q, mg.merged_state);
    disagreements += qrep.is_gfnmc != brute;
    negatives += !brute;

    std::size_t d = 0;
    for (const auto& t : enumerate_complete_trajectories(env.graph, 2'000'000)) d = std::gcd(d, t.edge_count());
    const std::size_t dp = periodicity(P), da = periodicity(mixed_kernel(P, R, 0.3));
    period_errors += dp != d || !(da == 1 || da == 2) || (d % 2 == 1 && da != 1);
  }
  Matrix loop(2, 2);
  loop << 0.0, 1.0, 0.5, 0.5;
  const Vector lpi = stationary(loop);
  const auto lrep = gfnmc_criterion(lpi, fundamental_matrix(loop, lpi), 0);
  const double loop_err = std::abs(lrep.residuals[1] - 1.0 / 3.0);
  const bool loop_ok = loop_err <= 1e-15 && !lrep.is_gfnmc && !brute_force_is_gfnmc(loop, 0);
  const bool ok = stat <= 1e-10 && spectrum <= 1e-8 && mixed <= 1e-10 && crit <= 1e-8 && disagreements == 0 &&
                  negatives >= 50 && period_errors == 0 && loop_ok;
  return {ok, fmt("stationarity %.1e, power sums %.1e", stat, spectrum) + fmt(", P_alpha %.1e, criterion %.1e", mixed, crit) +
                  fmt(", %.0f detector disagreements (%.0f negatives)", double(disagreements), double(negatives)) +
                  fmt(", %.0f period errors, counterexample |r - 1/3| = %.1e", double(period_errors), loop_err)};
}

/// True if no child of the source also feeds the sink. Otherwise the merged
/// chain carries forward and backward mass on the same s̄ -> x transition.
bool bridge_eligible(const DagGraph& g) {
  for (std::size_t c : g.children(g.source()))
    if (g.find_edge(c, g.sink())) return false;
  return true;
}

Outcome c6_reversibility_bridge() {
  Rng rng(6);
  double db_worst = 0.0, loop_worst = 0.0;
  std::size_t edges = 0, loops = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Environment env = trial < 8 ? setgen(trial % 2 ? 6 : 5, 3, 1, static_cast<std::uint64_t>(trial)) : random_environment(rng);
    if (!bridge_eligible(env.graph)) {
      --trial;
      continue;
    }
    const auto& g = env.graph;
    auto p = init_params(env, {ModelKind::tabular, BackwardMode::learned}, 0);
    randomize_params(p, rng, 1.0);
    const auto r = env.terminal_rewards();
    const double total = std::accumulate(r.begin(), r.end(), 0.0);
    p.set_log_z(std::log(total));
    const auto pf = edge_probs(p, env, true);
    auto pb = edge_probs(p, env, false);
    for (std::size_t e = 0; e < g.edge_count(); ++e)
      if (g.edge_to(e) == g.sink()) pb[e] = env.reward(g.edge_from(e)) / total;
    // measure: F(s) on inner states, Z at the source, Z at the sink
    std::vector<double> measure(g.size());
    for (std::size_t s = 0; s < g.size(); ++s) measure[s] = std::exp(p.at("log_flow").values[s]);
    measure[g.source()] = total;
    measure[g.sink()] = total;
    const auto rev = edge_reversibility_residuals(g, measure, pf, pb, 0.5);
    for (std::size_t e = 0; e < g.edge_count(); ++e, ++edges)
      db_worst = std::max(db_worst, std::abs(rev[e] - std::abs(db_residual(p, env, g.edge(e), {}).value)));

    const auto mg = merge_terminal(g);
    const Matrix P = 0.5 * build_kernel(mg, pf) + 0.5 * build_backward_kernel(mg, pb);
    const Vector pi = stationary(P);
    for (const auto& t : enumerate_complete_trajectories(g, 100'000)) {
      std::vector<std::size_t> loop;
      for (std::size_t s : t.states) loop.push_back(mg.from_original[s]);
      loop_worst = std::max(loop_worst, std::abs(kolmogorov_loop_check(pi, P, loop) - std::abs(tb_residual(p, env, t, {}).value)));
      ++loops;
    }
  }
  return {db_worst <= 1e-10 && loop_worst <= 1e-10,
          fmt("edge |rev - |DB|| max %.1e over %.0f edges", db_worst, double(edges)) +
              fmt("; loop |K - |TB|| max %.1e over %.0f loops", loop_worst, double(loops))};
}

Outcome c7_uniqueness() {
  const auto env = setgen(6, 3, 1, 7);
  bool ok = true;
  std::string detail;
  for (double alpha : {0.2, 0.5, 0.8}) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<ModelParams> fits;
    double worst_loss = 0.0;
    for (std::uint64_t init = 0; init < 2; ++init) {
      auto p = init_params(env, {}, 0);
      Rng rng(100 + init);
      randomize_params(p, rng, 2.0);
      const auto fit = fit_full_batch_db(p, env, alpha);
      worst_loss = std::max(worst_loss, fit.loss);
      fits.push_back(std::move(p));
    }
    double diff = std::abs(fits[0].log_z() - fits[1].log_z());
    const auto &a = fits[0].at("log_flow").values, &b = fits[1].at("log_flow").values;
    for (std::size_t s = 0; s < a.size(); ++s)
      if (s != env.graph.source() && s != env.graph.sink()) diff = std::max(diff, std::abs(a[s] - b[s]));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ok = ok && worst_loss < 1e-16 && diff <= 1e-6 && secs < 120.0;
    detail += fmt("alpha %.1f: ", alpha) + fmt("loss %.1e, log-flow gap %.1e; ", worst_loss, diff);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome c8_vanilla_convergence() {
  auto cfg = mini_run();
  cfg.alpha0 = 0.5;
  cfg.steps = 5000;
  cfg.eval_every = 5000;
  const auto env = build_environment(cfg.env);
  const auto res = train(env, cfg);
  const double rho = spearman(exact_terminating_probs(res.params, env), env.terminal_rewards());
  return {rho >= 0.99, fmt("Spearman(P_T, R) = %.4f over %.0f terminals", rho, double(env.graph.terminals().size()))};
}

/// Runs `cfg` for each seed concurrently.
std::vector<TrainResult> train_seeds(const RunConfig& base, std::uint64_t seeds) {
  const auto env = build_environment(base.env);
  std::vector<std::future<TrainResult>> jobs;
  for (std::uint64_t s = 0; s < seeds; ++s)
    jobs.push_back(std::async(std::launch::async, [&env, base, s] {
      auto cfg = base;
      cfg.seed = s;
      return train(env, cfg);
    }));
  std::vector<TrainResult> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

Outcome c9_entropy_order() {
  std::array<double, 2> mean{};
  const std::array alphas{0.2, 0.8};
  for (std::size_t k = 0; k < 2; ++k) {
    auto cfg = mini_run();
    cfg.alpha0 = alphas[k];
    cfg.stage1_fraction = 1.0;
    cfg.steps = 3000;
    cfg.eval_every = 100;
    double acc = 0.0;
    std::size_t rows = 0;
    for (const auto& r : train_seeds(cfg, 5))
      for (const auto& m : r.metrics)
        if (m.step <= cfg.steps / 3) {
          acc += m.entropy;
          ++rows;
        }
    mean[k] = acc / static_cast<double>(rows);
  }
  return {mean[1] < mean[0], fmt("first-third mean entropy: alpha 0.2 -> %.5f, alpha 0.8 -> %.5f", mean[0], mean[1])};
}

Outcome c10_scheduling() {
  auto sched = mini_run();
  sched.alpha0 = 0.9;
  sched.stage1_fraction = 0.9;
  sched.steps = 3000;
  sched.eval_every = 100;
  auto base = sched;
  base.alpha0 = 0.5;
  const auto rs = train_seeds(sched, 5), rb = train_seeds(base, 5);
  double modes_s = 0.0, modes_b = 0.0, rho1 = 0.0, rho2 = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    modes_s += static_cast<double>(rs[i].metrics.back().modes) / 5.0;
    modes_b += static_cast<double>(rb[i].metrics.back().modes) / 5.0;
    for (const auto& m : rs[i].metrics)
      if (m.step == rs[i].stage1_steps) rho1 += m.spearman / 5.0;
    rho2 += rs[i].metrics.back().spearman / 5.0;
  }
  return {modes_s >= modes_b && rho2 >= rho1,
          fmt("mean modes %.1f (scheduled) vs %.1f (alpha 0.5)", modes_s, modes_b) +
              fmt("; mean Spearman %.4f at end of stage 1, %.4f at end", rho1, rho2)};
}

Outcome c11_schedule_values() {
  const ScheduleSpec s{1001, 901, 0.9, 4.0};
  double worst = 0.0;
  for (std::uint64_t n : {1, 450, 901}) worst = std::max(worst, std::abs(alpha_at(s, n) - 0.9));
  const ScheduleSpec h{1001, 901, 0.5, 4.0};
  for (std::uint64_t n : {1, 901, 951, 1001}) worst = std::max(worst, std::abs(alpha_at(h, n) - 0.5));
  // (n - N1) / (N - N1) = 0.5
  const double mid = alpha_at(s, 951);
  worst = std::max(worst, std::abs(mid - (0.5 + 0.4 * std::exp(-2.0))));
  return {worst <= 1e-12 && std::abs(mid - 0.554134) < 5e-7,
          fmt("max deviation %.1e; midpoint value %.6f", worst, mid)};
}

Outcome c12_fl_prior() {
  double flow_worst = 0.0, fl_oracle = 0.0;
  std::size_t mismatches = 0;
  Rng rng(12);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto env = setgen(seed % 2 ? 6 : 5, 3, 2, seed);
    const auto& g = env.graph;
    const auto pb = uniform_backward(g);
    const auto ft = exact_flows(env, pb);
    const auto pf = induced_forward(env, ft, pb);
    // FL reparameterization: F~(s) = F(s) exp(E(s)); the sink keeps its flow
    std::vector<double> energies(g.size()), reparam(g.size());
    for (std::size_t s = 0; s < g.size(); ++s) {
      energies[s] = s == g.sink() ? 0.0 : env.state_energy(s);
      reparam[s] = ft.flow[s] * std::exp(energies[s]);
    }
    // the reparameterized table satisfies every FL balance
    auto q = tabular_params_from(env, ft, pf, pb);
    for (std::size_t s = 0; s < g.size(); ++s)
      if (s != g.source() && s != g.sink()) q.at("log_flow").values[s] = std::log(reparam[s]);
    for (const auto& t : enumerate_complete_trajectories(g))
      for (const auto& [i, j] : enumerate_subtrajectories(t))
        fl_oracle = std::max(fl_oracle, std::abs(fl_residual(q, env, t, i, j, {}).value));
    const auto back = fl_prior_transform(reparam, energies);
    for (std::size_t s = 0; s < g.size(); ++s) flow_worst = std::max(flow_worst, std::abs(back[s] - ft.flow[s]) / ft.flow[s]);

    // zero energies: FL and vanilla residuals coincide bit for bit
    Environment flat = env;
    std::fill(flat.state_energies.begin(), flat.state_energies.end(), 0.0);
    auto p = init_params(flat, {ModelKind::tabular, BackwardMode::learned}, 0);
    randomize_params(p, rng, 2.0);
    for (int k = 0; k < 50; ++k) {
      const auto t = sample_trajectory(p, flat, 0.5, rng);
      for (const auto& [i, j] : enumerate_subtrajectories(t)) {
        const double alpha = 0.1 + 0.8 * rng.uniform();
        const ObjectiveSpec fl{ObjectiveKind::fl_db, alpha, 1.0}, van{ObjectiveKind::db, alpha, 1.0};
        mismatches += fl_residual(p, flat, t, i, j, fl).value != alpha_subtb_residual(p, flat, t, i, j, van).value;
      }
    }
  }
  return {flow_worst <= 1e-10 && fl_oracle <= 1e-10 && mismatches == 0,
          fmt("recovered flows rel. error %.1e, FL balance of reparameterized table %.1e", flow_worst, fl_oracle) +
              fmt(", %.0f zero-energy bit mismatches", double(mismatches))};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "oracle proportionality", 1.0, c1_oracle_proportionality},
      {2, "alpha = 0.5 equivalence", 5.0, c2_alpha_half_bitwise},
      {3, "forward-probability gradient identity", 5.0, c3_gradient_identity},
      {4, "finite-difference gradients", 30.0, c4_finite_differences},
      {5, "Markov-chain identities", 60.0, c5_markov_chain_identities},
      {6, "reversibility bridge", 10.0, c6_reversibility_bridge},
      {7, "uniqueness of alpha-DB flows", 360.0, c7_uniqueness},
      {8, "vanilla convergence", 60.0, c8_vanilla_convergence},
      {9, "entropy ordering", 300.0, c9_entropy_order},
      {10, "alpha scheduling", 600.0, c10_scheduling},
      {11, "schedule values", 1.0, c11_schedule_values},
      {12, "forward-looking prior round trip", 5.0, c12_fl_prior},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs <= c.budget_s;
    failures += !pass;
    std::printf("%s %2d %-38s %s [%.2f s / %.0f s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                c.budget_s);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
