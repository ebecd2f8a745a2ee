// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "agfn/error.hpp"
#include "agfn/graph.hpp"

// Exact Markov-chain view of a GFlowNet: the source and sink are merged into
// one state s̄, so complete trajectories become loops through s̄.

namespace agfn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kDefaultChainCap = 2000;

namespace detail {

inline void check_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) throw InvalidArgument(std::string(what) + ": matrix must be square and non-empty");
}

inline void check_row_stochastic(const Matrix& P, double tol, const char* what) {
  for (Eigen::Index r = 0; r < P.rows(); ++r) {
    if ((P.row(r).array() < 0.0).any()) throw InvalidArgument(std::string(what) + ": negative entry in row " + std::to_string(r));
    const double s = P.row(r).sum();
    if (std::abs(s - 1.0) > tol)
      throw InvalidArgument(std::string(what) + ": row " + std::to_string(r) + " sums to " + std::to_string(s));
  }
}

inline std::vector<char> reach(const Matrix& P, std::size_t start, bool forward, std::size_t avoid = kNoState) {
  const auto n = static_cast<std::size_t>(P.rows());
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack{start};
  seen[start] = 1;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v = 0; v < n; ++v) {
      const double w = forward ? P(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v))
                               : P(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u));
      if (w > 0.0 && !seen[v] && v != avoid) {
        seen[v] = 1;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

}  // namespace detail

/// Row-stochastic kernel from per-edge probabilities on a merged chain.
inline Matrix build_kernel(std::size_t num_states, std::span<const Edge> edges, std::span<const double> probs,
                           double tol = 1e-12) {
  if (edges.size() != probs.size()) throw InvalidArgument("build_kernel: need one probability per edge");
  Matrix P = Matrix::Zero(static_cast<Eigen::Index>(num_states), static_cast<Eigen::Index>(num_states));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].from >= num_states || edges[e].to >= num_states) throw InvalidArgument("build_kernel: edge out of range");
    if (!(probs[e] > 0.0)) throw InvalidArgument("build_kernel: edge probabilities must be positive");
    P(static_cast<Eigen::Index>(edges[e].from), static_cast<Eigen::Index>(edges[e].to)) += probs[e];
  }
  detail::check_row_stochastic(P, tol, "build_kernel");
  return P;
}

/// Forward kernel: edge e of the original graph carries pf[e].
inline Matrix build_kernel(const MergedChainGraph& mg, std::span<const double> pf, double tol = 1e-12) {
  return build_kernel(mg.size(), mg.edges, pf, tol);
}

/// Backward kernel on the merged chain: edge e = (s -> s') is traversed in
/// reverse with pb[e] = P_B(s | s'). Sink edges must carry the terminal rule
/// P_B(x | s_f) so that the row of s̄ is a distribution over terminals.
inline Matrix build_backward_kernel(const MergedChainGraph& mg, std::span<const double> pb, double tol = 1e-12) {
  std::vector<Edge> rev;
  rev.reserve(mg.edges.size());
  for (const Edge& e : mg.edges) rev.push_back({e.to, e.from});
  return build_kernel(mg.size(), rev, pb, tol);
}

inline bool is_irreducible(const Matrix& P) {
  detail::check_square(P, "is_irreducible");
  const auto f = detail::reach(P, 0, true), b = detail::reach(P, 0, false);
  return std::all_of(f.begin(), f.end(), [](char c) { return c; }) &&
         std::all_of(b.begin(), b.end(), [](char c) { return c; });
}

/// Unique stationary distribution: solves pi (I - P) = 0 with the last
/// equation replaced by sum(pi) = 1.
inline Vector stationary(const Matrix& P) {
  detail::check_square(P, "stationary");
  if (!is_irreducible(P)) throw InvalidArgument("stationary: kernel is reducible");
  const Eigen::Index n = P.rows();
  Matrix A = Matrix::Identity(n, n) - P.transpose();
  A.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  Vector pi = A.partialPivLu().solve(rhs);
  if (!pi.allFinite()) throw NumericalFailure("stationary: singular system");
  return pi;
}

inline double stationarity_residual(const Matrix& P, const Vector& pi) {
  return (pi.transpose() * P - pi.transpose()).cwiseAbs().maxCoeff();
}

/// P̃(s, s') = pi(s') P(s', s) / pi(s).
inline Matrix reversed_kernel(const Matrix& P, const Vector& pi, double tol = 1e-8) {
  detail::check_square(P, "reversed_kernel");
  if (pi.size() != P.rows()) throw InvalidArgument("reversed_kernel: size mismatch");
  if ((pi.array() <= 0.0).any()) throw InvalidArgument("reversed_kernel: pi must be positive");
  if (stationarity_residual(P, pi / pi.sum()) > tol) throw InvalidArgument("reversed_kernel: pi is not stationary for P");
  return pi.cwiseInverse().asDiagonal() * P.transpose() * pi.asDiagonal();
}

inline Matrix mixed_kernel(const Matrix& P, const Matrix& P_rev, double alpha) {
  if (P.rows() != P_rev.rows() || P.cols() != P_rev.cols()) throw InvalidArgument("mixed_kernel: shape mismatch");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("mixed_kernel: alpha must lie in (0, 1)");
  return alpha * P + (1.0 - alpha) * P_rev;
}

inline Matrix pi_matrix(const Vector& pi) { return Vector::Ones(pi.size()) * pi.transpose(); }

/// Z = (I - P + Pi)^{-1} by dense LU; throws if the inverse fails its residual check.
inline Matrix fundamental_matrix(const Matrix& P, const Vector& pi, double tol = 1e-8) {
  detail::check_square(P, "fundamental_matrix");
  if (pi.size() != P.rows()) throw InvalidArgument("fundamental_matrix: size mismatch");
  const Eigen::Index n = P.rows();
  const Matrix A = Matrix::Identity(n, n) - P + pi_matrix(pi);
  Eigen::PartialPivLU<Matrix> lu(A);
  Matrix Z = lu.inverse();
  const double res = (Z * A - Matrix::Identity(n, n)).cwiseAbs().maxCoeff();
  if (!Z.allFinite() || res > tol)
    throw NumericalFailure("fundamental_matrix: inverse residual " + std::to_string(res) + " exceeds tolerance");
  return Z;
}

struct CriterionReport {
  std::vector<double> residuals;  // per state; zero at s̄
  double max_abs = 0.0;
  double tolerance = 1e-8;
  bool is_gfnmc = false;
};

/// Per-state residual of pi_s (Z_bb - Z_sb) + pi_b (Z_ss - Z_bs) = pi_b, b = s̄.
/// It vanishes exactly when every excursion from s returns to s̄ before s.
inline CriterionReport gfnmc_criterion(const Vector& pi, const Matrix& Z, std::size_t sbar, double tol = 1e-8) {
  const auto n = static_cast<std::size_t>(pi.size());
  if (Z.rows() != pi.size() || Z.cols() != pi.size()) throw InvalidArgument("gfnmc_criterion: size mismatch");
  if (sbar >= n) throw InvalidArgument("gfnmc_criterion: s̄ out of range");
  CriterionReport rep;
  rep.tolerance = tol;
  rep.residuals.assign(n, 0.0);
  const auto b = static_cast<Eigen::Index>(sbar);
  for (std::size_t si = 0; si < n; ++si) {
    if (si == sbar) continue;
    const auto s = static_cast<Eigen::Index>(si);
    const double lhs = pi(s) * (Z(b, b) - Z(s, b)) + pi(b) * (Z(s, s) - Z(b, s));
    rep.residuals[si] = lhs - pi(b);
    rep.max_abs = std::max(rep.max_abs, std::abs(rep.residuals[si]));
  }
  rep.is_gfnmc = rep.max_abs <= tol;
  return rep;
}

/// Structural test: no state can return to itself without passing through s̄.
inline bool brute_force_is_gfnmc(const Matrix& P, std::size_t sbar) {
  detail::check_square(P, "brute_force_is_gfnmc");
  const auto n = static_cast<std::size_t>(P.rows());
  for (std::size_t s = 0; s < n; ++s) {
    if (s == sbar) continue;
    if (P(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s)) > 0.0) return false;
    const auto seen = detail::reach(P, s, true, sbar);
    for (std::size_t v = 0; v < n; ++v)
      if (seen[v] && v != s && P(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(s)) > 0.0) return false;
  }
  return true;
}

/// Period of an irreducible chain: gcd over edges of level(u) + 1 - level(v)
/// for BFS levels from state 0.
inline std::size_t periodicity(const Matrix& P) {
  detail::check_square(P, "periodicity");
  if (!is_irreducible(P)) throw InvalidArgument("periodicity: kernel is reducible");
  const auto n = static_cast<std::size_t>(P.rows());
  std::vector<long> level(n, -1);
  std::vector<std::size_t> queue{0};
  level[0] = 0;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const std::size_t u = queue[q];
    for (std::size_t v = 0; v < n; ++v)
      if (P(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) > 0.0 && level[v] < 0) {
        level[v] = level[u] + 1;
        queue.push_back(v);
      }
  }
  long d = 0;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v)
      if (P(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) > 0.0)
        d = std::gcd(d, std::abs(level[u] + 1 - level[v]));
  return static_cast<std::size_t>(d);
}

struct Spectrum {
  std::vector<std::complex<double>> eigenvalues;
  std::vector<double> moduli;  // descending
  double beta = 0.0;           // second-largest modulus
};

/// Full spectrum via real Schur decomposition (Hessenberg reduction plus
/// shifted QR).
inline Spectrum eigen_moduli(const Matrix& P, std::size_t cap = kDefaultChainCap) {
  detail::check_square(P, "eigen_moduli");
  if (static_cast<std::size_t>(P.rows()) > cap)
    throw CapExceeded("eigen_moduli: dimension exceeds cap", static_cast<std::size_t>(P.rows()));
  Eigen::EigenSolver<Matrix> es;
  es.setMaxIterations(static_cast<Eigen::Index>(std::max<std::size_t>(100, 100 * static_cast<std::size_t>(P.rows()))));
  es.compute(P, false);
  if (es.info() != Eigen::Success) throw NumericalFailure("eigen_moduli: QR iteration did not converge");
  Spectrum sp;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) sp.eigenvalues.push_back(es.eigenvalues()(i));
  for (const auto& ev : sp.eigenvalues) sp.moduli.push_back(std::abs(ev));
  std::sort(sp.moduli.begin(), sp.moduli.end(), std::greater<>());
  sp.beta = sp.moduli.size() > 1 ? sp.moduli[1] : 0.0;
  return sp;
}

/// Per-edge |log(alpha pi(s) P_F(s'|s)) - log((1 - alpha) pi(s') P_B(s|s'))|.
/// `pi` is a positive measure over the original states including the sink;
/// sink edges read P_B(x | s_f) from pb.
inline std::vector<double> edge_reversibility_residuals(const DagGraph& g, std::span<const double> pi,
                                                        std::span<const double> pf, std::span<const double> pb,
                                                        double alpha) {
  if (pi.size() != g.size() || pf.size() != g.edge_count() || pb.size() != g.edge_count())
    throw InvalidArgument("reversibility_check: size mismatch");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("reversibility_check: alpha must lie in (0, 1)");
  std::vector<double> out(g.edge_count());
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const double lhs = std::log(alpha * pi[g.edge_from(e)] * pf[e]);
    const double rhs = std::log((1.0 - alpha) * pi[g.edge_to(e)] * pb[e]);
    out[e] = std::abs(lhs - rhs);
  }
  return out;
}

inline double reversibility_check(const DagGraph& g, std::span<const double> pi, std::span<const double> pf,
                                  std::span<const double> pb, double alpha) {
  const auto r = edge_reversibility_residuals(g, pi, pf, pb, alpha);
  return r.empty() ? 0.0 : *std::max_element(r.begin(), r.end());
}

/// |log(pi(s_0) prod P(s_i | s_{i-1})) - log(pi(s_n) prod P(s_{i-1} | s_i))| along a closed loop.
inline double kolmogorov_loop_check(const Vector& pi, const Matrix& P, std::span<const std::size_t> loop) {
  if (loop.size() < 2 || loop.front() != loop.back()) throw InvalidArgument("kolmogorov_loop_check: loop is not closed");
  double fwd = std::log(pi(static_cast<Eigen::Index>(loop.front())));
  double bwd = std::log(pi(static_cast<Eigen::Index>(loop.back())));
  for (std::size_t i = 1; i < loop.size(); ++i) {
    const auto a = static_cast<Eigen::Index>(loop[i - 1]), b = static_cast<Eigen::Index>(loop[i]);
    if (P(a, b) == 0.0 && P(b, a) == 0.0)
      throw InvalidArgument("kolmogorov_loop_check: step " + std::to_string(i) + " has no transition either way");
    fwd += std::log(P(a, b));
    bwd += std::log(P(b, a));
  }
  if (fwd == bwd) return 0.0;  // includes matching infinities
  return std::abs(fwd - bwd);
}

/// pi = pi_tilde * exp(-E(s)), entrywise (unnormalized).
inline std::vector<double> fl_prior_transform(std::span<const double> pi_tilde, std::span<const double> energies) {
  if (pi_tilde.size() != energies.size()) throw InvalidArgument("fl_prior_transform: length mismatch");
  std::vector<double> out(pi_tilde.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pi_tilde[i] * std::exp(-energies[i]);
  return out;
}

/// Flows on original states restricted to the merged chain (s̄ takes the source flow).
inline Vector merged_measure(const MergedChainGraph& mg, std::span<const double> flow) {
  Vector v(static_cast<Eigen::Index>(mg.size()));
  for (std::size_t m = 0; m < mg.size(); ++m) v(static_cast<Eigen::Index>(m)) = flow[mg.to_original[m]];
  return v;
}

/// Everything derived from one kernel.
struct ChainBundle {
  Matrix P;
  Vector pi;
  Matrix reversed;
  std::vector<double> alphas;
  std::vector<Matrix> mixed;
  Matrix Z;
  Matrix Pi;
  Spectrum spectrum;
  std::vector<double> beta_alpha;
  std::vector<std::size_t> period_alpha;
  std::size_t period = 0;
  CriterionReport criterion;
};

inline ChainBundle analyze_chain(const Matrix& P, std::size_t sbar, std::span<const double> alphas,
                                 double tol = 1e-8, std::size_t cap = kDefaultChainCap) {
  detail::check_square(P, "analyze_chain");
  if (static_cast<std::size_t>(P.rows()) > cap)
    throw CapExceeded("analyze_chain: merged state count exceeds cap", static_cast<std::size_t>(P.rows()));
  ChainBundle b;
  b.P = P;
  b.pi = stationary(P);
  b.reversed = reversed_kernel(P, b.pi);
  b.Z = fundamental_matrix(P, b.pi);
  b.Pi = pi_matrix(b.pi);
  b.spectrum = eigen_moduli(P, cap);
  b.period = periodicity(P);
  b.criterion = gfnmc_criterion(b.pi, b.Z, sbar, tol);
  for (double a : alphas) {
    b.alphas.push_back(a);
    b.mixed.push_back(mixed_kernel(P, b.reversed, a));
    b.beta_alpha.push_back(eigen_moduli(b.mixed.back(), cap).beta);
    b.period_alpha.push_back(periodicity(b.mixed.back()));
  }
  return b;
}

}  // namespace agfn
