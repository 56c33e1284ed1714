#pragma once

// Backward solver on the grid.
//
// Base case (exogenous coefficients): with
//   Xi_K = Y_T,
//   Xi_k = Xi_{k+1} + beta_k dt_k + sum_e sigma_{k+1,e} dW^T_{k,e}
//          + sum_u g0_{k+1,u} (dN0^T_{k,u} - dt_k mu0_u) + sum_u g1_{k+1,u} dN1^T_{k,u},
// the solution is Y_k = E_k[Xi_k]. With the one-step target
// T_k = Y_{k+1} + Xi_k - Xi_{k+1}, the martingale parts are
//   Z_k    = E_k[(T_k - Y_k) dB_k] / dt_k,
//   zeta_k = E_k[(T_k - Y_k) (dM_k - dt_k nu)] / Var(dM_k).
// Z and zeta at node K repeat node K-1.
//
// The nonlinear equation is solved by Picard iteration: coefficients are
// evaluated at the previous iterate and the base case is solved again.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bdsde/coefficients.hpp"
#include "bdsde/drivers.hpp"
#include "bdsde/parallel.hpp"
#include "bdsde/regression.hpp"

namespace bdsde {

struct SolutionTriple {
  const DriverPaths* drivers = nullptr;
  std::size_t K = 0, P = 0, n = 1, nF = 0;
  std::vector<double> Y;     // (K+1) x P
  std::vector<double> Z;     // (K+1) x P x n
  std::vector<double> zeta;  // (K+1) x P x nF
  std::vector<double> fit_residual;  // per node: weighted RMS of Xi_k - Y_k

  static SolutionTriple zeros(const DriverPaths& d) {
    SolutionTriple s;
    s.drivers = &d;
    s.K = d.steps();
    s.P = d.n_paths();
    s.n = d.brownian_dim();
    s.nF = d.spaces().F.size();
    s.Y.assign((s.K + 1) * s.P, 0.0);
    s.Z.assign((s.K + 1) * s.P * s.n, 0.0);
    s.zeta.assign((s.K + 1) * s.P * s.nF, 0.0);
    s.fit_residual.assign(s.K + 1, 0.0);
    return s;
  }

  // Triple with Y = c everywhere except the terminal node, Z = zeta = 0.
  static SolutionTriple constant(const DriverPaths& d, double c) {
    SolutionTriple s = zeros(d);
    std::fill(s.Y.begin(), s.Y.end(), c);
    return s;
  }

  double& y(std::size_t k, std::size_t p) { return Y[k * P + p]; }
  double y(std::size_t k, std::size_t p) const { return Y[k * P + p]; }
  double& z(std::size_t k, std::size_t p, std::size_t i = 0) { return Z[(k * P + p) * n + i]; }
  double z(std::size_t k, std::size_t p, std::size_t i = 0) const {
    return Z[(k * P + p) * n + i];
  }
  double& zeta_at(std::size_t k, std::size_t p, std::size_t a) {
    return zeta[(k * P + p) * nF + a];
  }
  double zeta_at(std::size_t k, std::size_t p, std::size_t a) const {
    return zeta[(k * P + p) * nF + a];
  }
  Vec z_row(std::size_t k, std::size_t p) const { return Vec(&Z[(k * P + p) * n], n); }
  Vec zeta_row(std::size_t k, std::size_t p) const {
    return nF ? Vec(&zeta[(k * P + p) * nF], nF) : Vec();
  }

  // Probability-weighted mean of Y at node k.
  double mean_y(std::size_t k) const {
    double s = 0.0;
    for (std::size_t p = 0; p < P; ++p) s += drivers->path_weight(p) * y(k, p);
    return s;
  }
};

// Coefficient values along the grid: beta is read at left nodes, the
// backward coefficients at right nodes. All arrays have K+1 nodes.
struct ExogenousFields {
  std::size_t K = 0, P = 0, n = 1, nE = 0, nU0 = 0, nU1 = 0;
  std::vector<double> beta;   // (K+1) x P
  std::vector<double> sigma;  // (K+1) x P x nE x n
  std::vector<double> g0;     // (K+1) x P x nU0
  std::vector<double> g1;     // (K+1) x P x nU1

  static ExogenousFields zeros(const DriverPaths& d) {
    ExogenousFields f;
    f.K = d.steps();
    f.P = d.n_paths();
    f.n = d.brownian_dim();
    f.nE = d.spaces().E.size();
    f.nU0 = d.spaces().U0.size();
    f.nU1 = d.spaces().U1.size();
    const std::size_t NP = (f.K + 1) * f.P;
    f.beta.assign(NP, 0.0);
    f.sigma.assign(NP * f.nE * f.n, 0.0);
    f.g0.assign(NP * f.nU0, 0.0);
    f.g1.assign(NP * f.nU1, 0.0);
    return f;
  }

  double& b(std::size_t k, std::size_t p) { return beta[k * P + p]; }
  double& s(std::size_t k, std::size_t p, std::size_t e, std::size_t i) {
    return sigma[((k * P + p) * nE + e) * n + i];
  }
  double& j0(std::size_t k, std::size_t p, std::size_t u) { return g0[(k * P + p) * nU0 + u]; }
  double& j1(std::size_t k, std::size_t p, std::size_t u) { return g1[(k * P + p) * nU1 + u]; }
};

namespace detail {

inline bool all_equal(const std::vector<double>& v) {
  for (double x : v)
    if (x != v.front()) return false;
  return true;
}

// Projection that returns constant targets unchanged.
inline void project_exact_constants(const ConditionalExpectation& ce, std::size_t k,
                                    const std::vector<double>& target,
                                    std::vector<double>& out) {
  if (all_equal(target)) {
    std::fill(out.begin(), out.end(), target.front());
    return;
  }
  ce.project(k, target.data(), out.data());
}

}  // namespace detail

inline SolutionTriple solve_simple(const std::vector<double>& terminal,
                                   const ExogenousFields& exo,
                                   const ConditionalExpectation& ce) {
  const DriverPaths& d = ce.drivers();
  const std::size_t K = d.steps(), P = d.n_paths(), n = d.brownian_dim();
  const auto& sp = d.spaces();
  const std::size_t nE = sp.E.size(), nU0 = sp.U0.size(), nU1 = sp.U1.size(), nF = sp.F.size();
  if (terminal.size() != P) throw std::invalid_argument("solve_simple: terminal size mismatch");
  if (exo.K != K || exo.P != P || exo.n != n || exo.nE != nE || exo.nU0 != nU0 ||
      exo.nU1 != nU1 || exo.beta.size() != (K + 1) * P)
    throw std::invalid_argument("solve_simple: exogenous fields do not conform to drivers");

  const NoiseView rv = reverse_view(d);
  SolutionTriple sol = SolutionTriple::zeros(d);
  std::copy(terminal.begin(), terminal.end(), sol.Y.begin() + static_cast<std::ptrdiff_t>(K * P));

  std::vector<double> xi(terminal), target(P), centered(P), tmp(P), proj(P);
  const auto& w = d.path_weights();
  for (std::size_t k = K; k-- > 0;) {
    const double dt = d.grid().dt(k);
    parallel_for(P, [&](std::size_t p) {
      const std::size_t r = (k + 1) * P + p;
      double inc = exo.beta[k * P + p] * dt;
      for (std::size_t e = 0; e < nE; ++e)
        for (std::size_t i = 0; i < n; ++i) inc += exo.sigma[(r * nE + e) * n + i] * rv.W(k, p, e, i);
      for (std::size_t u = 0; u < nU0; ++u)
        inc += exo.g0[r * nU0 + u] * (rv.N0(k, p, u) - dt * sp.U0.weight(u));
      for (std::size_t u = 0; u < nU1; ++u) inc += exo.g1[r * nU1 + u] * rv.N1(k, p, u);
      target[p] = sol.Y[r] + inc;
      xi[p] += inc;
    });

    detail::project_exact_constants(ce, k, xi, proj);
    std::copy(proj.begin(), proj.end(), sol.Y.begin() + static_cast<std::ptrdiff_t>(k * P));

    double rss = 0.0;
    for (std::size_t p = 0; p < P; ++p) rss += w[p] * (xi[p] - proj[p]) * (xi[p] - proj[p]);
    sol.fit_residual[k] = std::sqrt(rss);

    for (std::size_t p = 0; p < P; ++p) centered[p] = target[p] - sol.Y[k * P + p];
    const bool zero_increment = std::all_of(centered.begin(), centered.end(),
                                            [](double v) { return v == 0.0; });
    for (std::size_t i = 0; i < n; ++i) {
      if (zero_increment) break;
      for (std::size_t p = 0; p < P; ++p) tmp[p] = centered[p] * d.dB(k, p, i);
      ce.project(k, tmp.data(), proj.data());
      for (std::size_t p = 0; p < P; ++p) sol.Z[(k * P + p) * n + i] = proj[p] / dt;
    }
    for (std::size_t a = 0; a < nF; ++a) {
      if (zero_increment) break;
      const double var = d.m_count_variance(k, a);
      if (!(var > 0.0)) continue;
      const double mean = dt * sp.F.weight(a);
      for (std::size_t p = 0; p < P; ++p) tmp[p] = centered[p] * (d.M(k, p, a) - mean);
      ce.project(k, tmp.data(), proj.data());
      for (std::size_t p = 0; p < P; ++p) sol.zeta[(k * P + p) * nF + a] = proj[p] / var;
    }
  }
  if (K > 0) {
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t i = 0; i < n; ++i) sol.Z[(K * P + p) * n + i] = sol.Z[((K - 1) * P + p) * n + i];
      for (std::size_t a = 0; a < nF; ++a)
        sol.zeta[(K * P + p) * nF + a] = sol.zeta[((K - 1) * P + p) * nF + a];
    }
  }
  return sol;
}

inline SolutionTriple solve_simple(const TerminalCondition& terminal, const ExogenousFields& exo,
                                   const DriverPaths& d, const RegressionSpec& spec) {
  const ConditionalExpectation ce(d, spec);
  return solve_simple(terminal.realize(d), exo, ce);
}

// Coefficients evaluated along a triple.
inline ExogenousFields evaluate_coefficients(const CoefficientSet& c, const SolutionTriple& s) {
  const DriverPaths& d = *s.drivers;
  ExogenousFields f = ExogenousFields::zeros(d);
  const std::size_t K = f.K, P = f.P, n = f.n;
  parallel_for(P, [&](std::size_t p) {
    for (std::size_t k = 0; k <= K; ++k) {
      const double t = d.grid().node(k);
      const double y = s.y(k, p);
      const Vec z = s.z_row(k, p), zeta = s.zeta_row(k, p);
      if (k < K) f.beta[k * P + p] = c.beta(t, y, z, zeta);
      if (k > 0) {
        for (std::size_t e = 0; e < f.nE; ++e)
          c.sigma(t, y, z, e, std::span<double>(&f.sigma[((k * P + p) * f.nE + e) * n], n));
        for (std::size_t u = 0; u < f.nU0; ++u) f.g0[(k * P + p) * f.nU0 + u] = c.g0(t, y, z, u);
        for (std::size_t u = 0; u < f.nU1; ++u) f.g1[(k * P + p) * f.nU1 + u] = c.g1(t, y, z, u);
      }
    }
  });
  for (double v : f.beta)
    if (!std::isfinite(v)) throw std::runtime_error("coefficient map 'beta' produced a non-finite value");
  for (double v : f.sigma)
    if (!std::isfinite(v)) throw std::runtime_error("coefficient map 'sigma' produced a non-finite value");
  for (double v : f.g0)
    if (!std::isfinite(v)) throw std::runtime_error("coefficient map 'g0' produced a non-finite value");
  for (double v : f.g1)
    if (!std::isfinite(v)) throw std::runtime_error("coefficient map 'g1' produced a non-finite value");
  return f;
}

// Weight e^{lambda s} and constants a, b from the contraction argument:
// a C + b alpha + alpha < 1 and lambda - 1/a - 1/b > (a + b + 1) C / hat.
struct WeightedNorm {
  double C = 0.0, alpha = 0.0;
  double a = 1.0, b = 1.0;
  double lambda = 3.0;

  double hat() const { return a * C + alpha + b * alpha; }
  double y_weight() const { return lambda - 1.0 / a - 1.0 / b; }
};

// a, b as large as possible (capped at 1) with a C + b alpha <= (1 - alpha) / 2,
// i.e. hat <= (1 + alpha) / 2. The budget is split evenly when alpha > 0.
inline WeightedNorm default_weighted_norm(double C, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw std::invalid_argument("weighted norm: alpha must lie in [0, 1)");
  if (!(C >= 0.0)) throw std::invalid_argument("weighted norm: C must be >= 0");
  WeightedNorm w;
  w.C = C;
  w.alpha = alpha;
  const double budget = 0.5 * (1.0 - alpha);
  if (alpha > 0.0) {
    w.a = C > 0.0 ? std::min(1.0, 0.5 * budget / C) : 1.0;
    w.b = std::min(1.0, 0.5 * budget / alpha);
  } else {
    w.a = C > 0.0 ? std::min(1.0, budget / C) : 1.0;
    w.b = w.a;
  }
  const double hat = w.hat();
  const double extra = hat > 0.0 ? (w.a + w.b + 1.0) * C / hat : 0.0;
  w.lambda = 1.0 / w.a + 1.0 / w.b + extra + 1.0;
  return w;
}

struct DifferenceNorms {
  double weighted_sq = 0.0;  // sum dt e^{-lambda (T - t_k)} E[c_y dY^2 + |dZ|^2 + ||d zeta||^2]
  double y_part = 0.0, z_part = 0.0, zeta_part = 0.0;
  double sup_y = 0.0;
};

inline DifferenceNorms difference_norms(const SolutionTriple& u, const SolutionTriple& v,
                                        const WeightedNorm& wn) {
  const DriverPaths& d = *u.drivers;
  const auto& F = d.spaces().F;
  const double T = d.grid().horizon();
  DifferenceNorms out;
  for (std::size_t k = 0; k <= u.K; ++k)
    for (std::size_t p = 0; p < u.P; ++p) out.sup_y = std::max(out.sup_y, std::abs(u.y(k, p) - v.y(k, p)));
  for (std::size_t k = 0; k < u.K; ++k) {
    const double scale = d.grid().dt(k) * std::exp(-wn.lambda * (T - d.grid().node(k)));
    double ey = 0.0, ez = 0.0, ezeta = 0.0;
    for (std::size_t p = 0; p < u.P; ++p) {
      const double w = d.path_weight(p);
      const double dy = u.y(k, p) - v.y(k, p);
      ey += w * dy * dy;
      for (std::size_t i = 0; i < u.n; ++i) {
        const double dz = u.z(k, p, i) - v.z(k, p, i);
        ez += w * dz * dz;
      }
      for (std::size_t a = 0; a < u.nF; ++a) {
        const double dz = u.zeta_at(k, p, a) - v.zeta_at(k, p, a);
        ezeta += w * dz * dz * F.weight(a);
      }
    }
    out.y_part += scale * wn.y_weight() * ey;
    out.z_part += scale * ez;
    out.zeta_part += scale * ezeta;
  }
  out.weighted_sq = out.y_part + out.z_part + out.zeta_part;
  return out;
}

struct PicardOptions {
  double tol = 1e-6;
  std::size_t max_iter = 60;
  bool force = false;
  std::optional<SolutionTriple> initial;
  std::optional<WeightedNorm> norm;
};

struct IterationRecord {
  std::size_t iteration = 0;  // the update that produced Y^(iteration)
  DifferenceNorms diff;       // between Y^(iteration) and Y^(iteration-1)
  double ratio = std::numeric_limits<double>::quiet_NaN();
};

struct PicardDiagnostics {
  WeightedNorm norm;
  double theoretical_bound = 0.0;
  std::vector<IterationRecord> iterations;
  // max(1, n) with n the index of the first iterate Y^(n) whose successor
  // differs from it by at most tol; the returned triple is that successor.
  // Equals `updates` when not converged.
  std::size_t iterations_used = 0;
  std::size_t updates = 0;
  bool converged = false;
  double tol = 0.0;
};

struct PicardResult {
  SolutionTriple solution;
  PicardDiagnostics diagnostics;
};

inline void check_compatible(const CoefficientSet& c, const DriverPaths& d) {
  if (!(c.spaces == d.spaces()))
    throw std::invalid_argument("coefficient set '" + c.name +
                                "' was built for different mark spaces than the drivers");
  if (c.brownian_dim != d.brownian_dim())
    throw std::invalid_argument("coefficient set '" + c.name +
                                "' has a different Brownian dimension than the drivers");
}

inline PicardResult picard_solve(const CoefficientSet& c, const std::vector<double>& terminal,
                                 const ConditionalExpectation& ce,
                                 const PicardOptions& opt = {}) {
  const DriverPaths& d = ce.drivers();
  check_compatible(c, d);
  if (!opt.force) {
    if (!c.condition21)
      throw std::invalid_argument("picard_solve: coefficient set '" + c.name +
                                  "' is not declared Lipschitz-compliant (use force to run anyway)");
    if (!(c.lipschitz_alpha < 1.0))
      throw std::invalid_argument("picard_solve: declared alpha must be < 1");
  }
  if (opt.max_iter < 1) throw std::invalid_argument("picard_solve: max_iter must be >= 1");

  PicardResult res;
  auto& diag = res.diagnostics;
  diag.norm = opt.norm ? *opt.norm
                       : default_weighted_norm(c.lipschitz_C, std::min(c.lipschitz_alpha, 0.999));
  diag.theoretical_bound = diag.norm.hat();
  diag.tol = opt.tol;

  SolutionTriple prev = opt.initial ? *opt.initial : SolutionTriple::zeros(d);
  if (prev.drivers != &d) prev.drivers = &d;
  if (prev.Y.size() != (d.steps() + 1) * d.n_paths())
    throw std::invalid_argument("picard_solve: initial triple does not conform to drivers");

  const double ratio_floor = 1e-28;
  double last_sq = -1.0;
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    const ExogenousFields f = evaluate_coefficients(c, prev);
    SolutionTriple next = solve_simple(terminal, f, ce);
    IterationRecord rec;
    rec.iteration = it;
    rec.diff = difference_norms(next, prev, diag.norm);
    if (last_sq > ratio_floor) rec.ratio = rec.diff.weighted_sq / last_sq;
    last_sq = rec.diff.weighted_sq;
    diag.iterations.push_back(rec);
    diag.updates = it;
    prev = std::move(next);
    if (std::sqrt(rec.diff.weighted_sq) <= opt.tol && rec.diff.sup_y <= opt.tol) {
      diag.converged = true;
      diag.iterations_used = std::max<std::size_t>(1, it - 1);
      break;
    }
  }
  if (!diag.converged) diag.iterations_used = diag.updates;
  res.solution = std::move(prev);
  return res;
}

inline PicardResult picard_solve(const CoefficientSet& c, const TerminalCondition& terminal,
                                 const DriverPaths& d, const RegressionSpec& spec,
                                 const PicardOptions& opt = {}) {
  const ConditionalExpectation ce(d, spec);
  return picard_solve(c, terminal.realize(d), ce, opt);
}

struct GapRecord {
  double sup_Y_gap = 0.0;
  double L2_Z_gap = 0.0;
  double L2_zeta_gap = 0.0;
};

inline GapRecord uniqueness_gap(const SolutionTriple& u, const SolutionTriple& v) {
  if (u.K != v.K || u.P != v.P || u.n != v.n || u.nF != v.nF || u.drivers == nullptr ||
      v.drivers == nullptr || !(u.drivers->grid() == v.drivers->grid()) ||
      !(u.drivers->spaces() == v.drivers->spaces()))
    throw std::invalid_argument("uniqueness_gap: solutions have different shapes");
  const DriverPaths& d = *u.drivers;
  const auto& F = d.spaces().F;
  GapRecord g;
  for (std::size_t i = 0; i < u.Y.size(); ++i) g.sup_Y_gap = std::max(g.sup_Y_gap, std::abs(u.Y[i] - v.Y[i]));
  double z2 = 0.0, zeta2 = 0.0;
  for (std::size_t k = 0; k < u.K; ++k) {
    const double dt = d.grid().dt(k);
    for (std::size_t p = 0; p < u.P; ++p) {
      const double w = d.path_weight(p) * dt;
      for (std::size_t i = 0; i < u.n; ++i) {
        const double dz = u.z(k, p, i) - v.z(k, p, i);
        z2 += w * dz * dz;
      }
      for (std::size_t a = 0; a < u.nF; ++a) {
        const double dz = u.zeta_at(k, p, a) - v.zeta_at(k, p, a);
        zeta2 += w * dz * dz * F.weight(a);
      }
    }
  }
  g.L2_Z_gap = std::sqrt(z2);
  g.L2_zeta_gap = std::sqrt(zeta2);
  return g;
}

}  // namespace bdsde
