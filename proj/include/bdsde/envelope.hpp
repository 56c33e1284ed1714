#pragma once

// Minimal and maximal solutions for drifts of linear growth. The drift is
// replaced by n-Lipschitz inf/sup convolutions; each level is a Lipschitz
// equation solved by Picard iteration, and the level solutions are bracketed
// by the two equations with drift +-K(2 + |y| + |z|) + int C zeta dnu.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "bdsde/coefficients.hpp"
#include "bdsde/comparison.hpp"
#include "bdsde/solver.hpp"

namespace bdsde {

enum class ConvolutionKind { inf, sup };

inline const char* to_string(ConvolutionKind k) { return k == ConvolutionKind::inf ? "inf" : "sup"; }

// Grid search over (y', z'): a coarse lattice anchored at the origin, then
// zoom refinement around the center and the best few discrete local minima
// until the cell is below `resolution`.
struct SearchSpec {
  std::size_t coarse = 64;
  std::size_t zoom = 17;
  std::size_t candidates = 3;
  double resolution = 1e-14;
  // Box radius when no a-priori bound on the optimizer exists (level == K).
  double radius = 8.0;
  std::size_t max_enlarge = 4;
};

class ConvolutionApproximant {
 public:
  ConvolutionApproximant(ConvolutionKind kind, const CoefficientSet& base, double n, double K,
                         const SearchSpec& search)
      : kind_(kind), base_(base.beta), n_(n), K_(K), search_(search),
        dim_(base.brownian_dim), two_d_(base.drift_uses_z) {
    if (!base.beta) throw std::invalid_argument("convolution: base drift is empty");
    if (!(K >= 0.0) || !std::isfinite(K))
      throw std::invalid_argument("convolution: growth constant K must be finite and >= 0");
    if (!(n >= K) || !std::isfinite(n) || !(n > 0.0))
      throw std::invalid_argument("convolution: level n must be positive and >= K");
    if (two_d_ && dim_ != 1)
      throw std::invalid_argument(
          "convolution: drifts depending on z are supported for a scalar Brownian motion only");
    if (search.coarse < 3 || search.zoom < 3 || search.candidates < 1 ||
        !(search.resolution > 0.0) || !(search.radius > 0.0))
      throw std::invalid_argument("convolution: invalid search settings");
  }

  ConvolutionKind kind() const { return kind_; }
  double level() const { return n_; }
  double growth() const { return K_; }
  const SearchSpec& search() const { return search_; }

  // Radius containing every optimizer, or infinity when n == K.
  double guaranteed_radius(double y, Vec z) const {
    if (!(n_ > K_)) return std::numeric_limits<double>::infinity();
    double zn = 0.0;
    for (double v : z) zn += v * v;
    return 2.0 * K_ * (1.0 + std::abs(y) + std::sqrt(zn)) / (n_ - K_);
  }

  double operator()(double s, double y, Vec z, Vec zeta) const {
    const double center = base_(s, y, z, zeta);
    const double sign = kind_ == ConvolutionKind::inf ? 1.0 : -1.0;
    double conv;
    if (two_d_) {
      std::vector<double> zb(z.begin(), z.end());
      const double z0 = zb[0];
      conv = sign * minimize(y, z, [&](double dy, double dz) {
        zb[0] = z0 + dz;
        return sign * base_(s, y + dy, zb, zeta) + n_ * (std::abs(dy) + std::abs(dz));
      });
    } else {
      conv = sign * minimize(y, z, [&](double dy, double) {
        return sign * base_(s, y + dy, z, zeta) + n_ * std::abs(dy);
      });
    }
    if (kind_ == ConvolutionKind::inf) return std::min(conv, center);
    return std::min(center + K_, std::max(conv, center));
  }

  DriftMap as_drift() const {
    auto self = std::make_shared<const ConvolutionApproximant>(*this);
    return [self](double s, double y, Vec z, Vec zeta) { return (*self)(s, y, z, zeta); };
  }

 private:
  struct Point {
    double v, dy, dz;
  };

  template <class Obj>
  double minimize(double y, Vec z, Obj&& obj) const {
    const double bound = guaranteed_radius(y, z);
    if (bound == 0.0) return obj(0.0, 0.0);
    const bool guaranteed = std::isfinite(bound);
    double R = guaranteed ? bound : search_.radius;
    const double z0 = two_d_ ? z[0] : 0.0;
    for (std::size_t attempt = 0;; ++attempt) {
      const double h0 = 2.0 * R / static_cast<double>(search_.coarse - 1);
      const Point p = search_box(R, h0, y, z0, obj);
      const double edge = R - 1.0001 * h0;
      const bool on_edge = std::abs(p.dy) > edge || (two_d_ && std::abs(p.dz) > edge);
      if (guaranteed || !on_edge) return p.v;
      if (attempt == search_.max_enlarge)
        throw std::runtime_error("convolution search: optimizer on the boundary of a box of radius " +
                                 std::to_string(R) + " after enlarging; increase the search radius");
      R *= 4.0;
    }
  }

  static bool better(const Point& a, const Point& b) {
    const double tie = 1e-13 * (1.0 + std::abs(b.v));
    if (a.v < b.v - tie) return true;
    if (a.v > b.v + tie) return false;
    return std::abs(a.dy) + std::abs(a.dz) < std::abs(b.dy) + std::abs(b.dz);
  }

  // Offsets d with x + d on the lattice h0 * Z (so the origin is sampled)
  // inside [x - R, x + R], plus both box ends.
  static std::vector<double> lattice(double x, double R, double h0) {
    std::vector<double> out{-R};
    const double jlo = std::ceil((x - R) / h0), jhi = std::floor((x + R) / h0);
    for (double j = jlo; j <= jhi; j += 1.0) {
      const double d = j * h0 - x;
      if (d > -R && d < R) out.push_back(d);
    }
    out.push_back(R);
    return out;
  }

  template <class Obj>
  Point search_box(double R, double h0, double y, double z0, Obj& obj) const {
    const std::vector<double> gy = lattice(y, R, h0);
    const std::vector<double> gz = two_d_ ? lattice(z0, R, h0) : std::vector<double>{0.0};
    const std::size_t m = gy.size(), mz = gz.size();
    std::vector<double> v(m * mz);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < mz; ++j) v[i * mz + j] = obj(gy[i], gz[j]);

    // Discrete local minima of the coarse grid, plus the center.
    std::vector<Point> starts{{obj(0.0, 0.0), 0.0, 0.0}};
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < mz; ++j) {
        const double x = v[i * mz + j];
        bool local = (i == 0 || x <= v[(i - 1) * mz + j]) && (i + 1 == m || x <= v[(i + 1) * mz + j]);
        if (two_d_)
          local = local && (j == 0 || x <= v[i * mz + j - 1]) && (j + 1 == mz || x <= v[i * mz + j + 1]);
        if (local) starts.push_back({x, gy[i], gz[j]});
      }
    std::sort(starts.begin() + 1, starts.end(),
              [](const Point& a, const Point& b) { return a.v < b.v; });
    if (starts.size() > search_.candidates + 1) starts.resize(search_.candidates + 1);

    Point best = starts[0];
    const std::size_t q = search_.zoom;
    for (const Point& st : starts) {
      Point cur = st;
      double h = h0;
      for (int guard = 0; h > search_.resolution && guard < 200; ++guard) {
        const Point c = cur;
        for (std::size_t i = 0; i < q; ++i) {
          const double dy = c.dy - h + 2.0 * h * static_cast<double>(i) / static_cast<double>(q - 1);
          if (!two_d_) {
            const Point p{obj(dy, 0.0), dy, 0.0};
            if (better(p, cur)) cur = p;
            continue;
          }
          for (std::size_t j = 0; j < q; ++j) {
            const double dz = c.dz - h + 2.0 * h * static_cast<double>(j) / static_cast<double>(q - 1);
            const Point p{obj(dy, dz), dy, dz};
            if (better(p, cur)) cur = p;
          }
        }
        h = 2.0 * h / static_cast<double>(q - 1);
      }
      if (better(cur, best)) best = cur;
    }
    return best;
  }

  ConvolutionKind kind_;
  DriftMap base_;
  double n_, K_;
  SearchSpec search_;
  std::size_t dim_;
  bool two_d_;
};

namespace detail {

inline double require_growth(const CoefficientSet& c, const char* where) {
  if (!c.growth_K)
    throw std::invalid_argument(std::string(where) + ": coefficient set '" + c.name +
                                "' declares no linear-growth constant K");
  return *c.growth_K;
}

// Largest int C(s, u)^2 nu(du) over the grid nodes.
inline double kernel_sq_integral(const CoefficientSet& c, const TimeGrid& grid) {
  const auto& F = c.spaces.F;
  if (F.size() == 0) return 0.0;
  if (!c.drift_structure)
    throw std::invalid_argument("coefficient set '" + c.name +
                                "' has jump-dependent drift but declares no kernel");
  double worst = 0.0;
  for (std::size_t k = 0; k <= grid.steps(); ++k) {
    double s = 0.0;
    for (std::size_t a = 0; a < F.size(); ++a) {
      const double v = c.drift_structure->kernel(grid.node(k), a);
      s += v * v * F.weight(a);
    }
    worst = std::max(worst, s);
  }
  return worst;
}

inline CoefficientSet with_drift(const CoefficientSet& base, DriftMap beta, std::string name,
                                 double drift_C, bool uses_z) {
  CoefficientSet c = base;
  c.name = std::move(name);
  c.beta = std::move(beta);
  c.drift_uses_z = uses_z;
  c.drift_structure.reset();
  c.lipschitz_C = std::max(drift_C, base.noise_C);
  c.condition21 = base.noise_lipschitz;
  return c;
}

inline PicardResult solve_level(const CoefficientSet& c, const std::vector<double>& terminal,
                                const ConditionalExpectation& ce, const PicardOptions& opt) {
  PicardResult r = picard_solve(c, terminal, ce, opt);
  if (!r.diagnostics.converged)
    throw std::runtime_error("envelope: Picard iteration for '" + c.name + "' did not reach tol " +
                             std::to_string(opt.tol) + " in " + std::to_string(opt.max_iter) +
                             " iterations");
  return r;
}

inline double mean_at_zero(const SolutionTriple& s) {
  const auto& w = s.drivers->path_weights();
  double m = 0.0;
  for (std::size_t p = 0; p < s.P; ++p) m += w[p] * s.y(0, p);
  return m;
}

}  // namespace detail

inline ConvolutionApproximant inf_convolution(const CoefficientSet& base, double n,
                                              const SearchSpec& search = {}) {
  return ConvolutionApproximant(ConvolutionKind::inf, base,
                                n, detail::require_growth(base, "inf_convolution"), search);
}

inline ConvolutionApproximant sup_convolution(const CoefficientSet& base, double n, double K,
                                              const SearchSpec& search = {}) {
  return ConvolutionApproximant(ConvolutionKind::sup, base, n, K, search);
}

inline ConvolutionApproximant sup_convolution(const CoefficientSet& base, double n,
                                              const SearchSpec& search = {}) {
  return sup_convolution(base, n, detail::require_growth(base, "sup_convolution"), search);
}

// Coefficient set with the drift replaced by the approximant. Drift constant
// for the weighted norm: 3 max(n^2, int C^2 dnu).
inline CoefficientSet approximant_coefficients(const CoefficientSet& base,
                                               const ConvolutionApproximant& a,
                                               const TimeGrid& grid) {
  const double n = a.level();
  const double drift_C = 3.0 * std::max(n * n, detail::kernel_sq_integral(base, grid));
  char buf[64];
  std::snprintf(buf, sizeof buf, "[%s-conv n=%g]", to_string(a.kind()), n);
  CoefficientSet c = detail::with_drift(base, a.as_drift(), base.name + " " + buf, drift_C,
                                        base.drift_uses_z);
  c.growth_K = a.kind() == ConvolutionKind::inf ? a.growth() : 2.0 * a.growth();
  return c;
}

struct BoundingPair {
  SolutionTriple upper, lower;
  PicardDiagnostics upper_diagnostics, lower_diagnostics;
};

// Drifts +-K(2 + |y| + |z|) + int C zeta dnu with the noise of `shared`.
inline BoundingPair bounding_solutions(double K, const CoefficientSet& shared,
                                       const std::vector<double>& terminal,
                                       const ConditionalExpectation& ce,
                                       const PicardOptions& opt = {}) {
  if (!(K > 0.0) || !std::isfinite(K))
    throw std::invalid_argument("bounding_solutions: K must be positive and finite");
  const DriverPaths& d = ce.drivers();
  const double kint = detail::kernel_sq_integral(shared, d.grid());
  const auto& F = shared.spaces.F;
  std::function<double(double, std::size_t)> kernel = [](double, std::size_t) { return 0.0; };
  if (F.size() > 0) kernel = shared.drift_structure->kernel;

  auto make = [&](double sign) -> DriftMap {
    return [K, sign, kernel, F](double s, double y, Vec z, Vec zeta) {
      double zn = 0.0;
      for (double v : z) zn += v * v;
      double jump = 0.0;
      for (std::size_t a = 0; a < F.size(); ++a) jump += kernel(s, a) * zeta[a] * F.weight(a);
      return sign * K * (2.0 + std::abs(y) + std::sqrt(zn)) + jump;
    };
  };
  const double drift_C = 3.0 * std::max(K * K, kint);
  const auto up = detail::with_drift(shared, make(1.0), "upper bound", drift_C, true);
  const auto lo = detail::with_drift(shared, make(-1.0), "lower bound", drift_C, true);
  auto ru = detail::solve_level(up, terminal, ce, opt);
  auto rl = detail::solve_level(lo, terminal, ce, opt);
  return {std::move(ru.solution), std::move(rl.solution), std::move(ru.diagnostics),
          std::move(rl.diagnostics)};
}

struct EnvelopeOptions {
  std::vector<double> levels{2.0, 4.0, 8.0};
  SearchSpec search;
  PicardOptions picard;
  double delta = std::numeric_limits<double>::quiet_NaN();  // NaN: calibrate
  bool force = false;
  CloudSpec cloud;
};

struct EnvelopeLevel {
  double n = 0.0;
  SolutionTriple lower, upper;  // inf- and sup-convolution solutions
  PicardDiagnostics lower_diagnostics, upper_diagnostics;
  double y0_lower = 0.0, y0_upper = 0.0, width = 0.0;
  // Against the previous level; NaN on the first.
  double cauchy_Z_lower = std::numeric_limits<double>::quiet_NaN();
  double cauchy_zeta_lower = std::numeric_limits<double>::quiet_NaN();
  double cauchy_Z_upper = std::numeric_limits<double>::quiet_NaN();
  double cauchy_zeta_upper = std::numeric_limits<double>::quiet_NaN();
};

struct LinkCheck {
  std::string name;
  std::size_t violations = 0;
  double worst_excess = 0.0;
};

struct EnvelopeReport {
  double K = 0.0;
  double delta = 0.0;
  double calibration_error = 0.0;
  std::vector<EnvelopeLevel> levels;
  BoundingPair bounds;
  double y0_lower_bound = 0.0, y0_upper_bound = 0.0;
  std::vector<LinkCheck> links;
  bool monotone = true;
  double limit_lower = 0.0, limit_upper = 0.0;  // finest-level Y^I(0), Y^S(0)
  StructureReport validation;
  bool forced = false;
};

namespace detail {

inline LinkCheck check_link(std::string name, const SolutionTriple& lo, const SolutionTriple& hi,
                            double delta) {
  LinkCheck l;
  l.name = std::move(name);
  for (std::size_t i = 0; i < lo.Y.size(); ++i) {
    const double excess = lo.Y[i] - hi.Y[i];
    if (excess > delta) {
      ++l.violations;
      l.worst_excess = std::max(l.worst_excess, excess);
    }
  }
  return l;
}

// Existence hypotheses: jump maps z-free and monotone, Lipschitz noise with
// alpha < 1, beta = h + int C zeta dnu with |h| <= K(1 + |y| + |z|),
// C <= 1 or C >= -1, and int C^2 dnu <= K.
inline StructureReport validate_envelope_structure(const CoefficientSet& c, double K,
                                                   const Cloud& cloud) {
  StructureReport rep;
  rep.pass = true;
  auto add = [&rep](ClauseResult r) {
    rep.pass = rep.pass && r.pass;
    rep.clauses.push_back(std::move(r));
  };
  add(check_jump_z_free(c, cloud));
  add(check_jump_monotone(c, cloud));
  {
    ClauseCheck ck("noise maps Lipschitz");
    ck.le(c.noise_lipschitz ? 0.0 : 1.0, 0.0, "declared noise family");
    add(std::move(ck).result());
  }
  add(check_noise_lipschitz(c, cloud));
  if (!c.drift_structure) {
    ClauseResult r;
    r.clause = "drift structure record present";
    r.pass = false;
    r.checked = 1;
    r.counterexample = "coefficient set '" + c.name + "' declares no drift structure";
    add(r);
    return rep;
  }
  const auto& st = *c.drift_structure;
  const auto& F = c.spaces.F;
  ClauseCheck growth("|h| <= K(1 + |y| + |z|)");
  ClauseCheck upper("kernel <= 1"), lower("kernel >= -1");
  ClauseCheck kint("integral of kernel^2 against nu <= K");
  for (const auto& pr : cloud) {
    const InputPoint& x = pr.a;
    growth.le(std::abs(st.h(x.s, x.y, x.z)), K * (1.0 + std::abs(x.y) + std::sqrt(sq_norm(x.z))),
              describe(x));
    double integral = 0.0;
    for (std::size_t a = 0; a < F.size(); ++a) {
      const double k = st.kernel(x.s, a);
      upper.le(k, 1.0, "atom " + F.atom(a).label);
      lower.le(-1.0, k, "atom " + F.atom(a).label);
      integral += k * k * F.weight(a);
    }
    kint.le(integral, K, "s=" + std::to_string(x.s));
  }
  add(std::move(growth).result());
  ClauseResult up = std::move(upper).result(), lo = std::move(lower).result();
  ClauseResult range = up.pass ? up : lo;
  if (!up.pass && !lo.pass) range.clause = "kernel <= 1 or kernel >= -1";
  add(std::move(range));
  add(std::move(kint).result());
  return rep;
}

}  // namespace detail

inline EnvelopeReport envelope_solve(const CoefficientSet& c, const std::vector<double>& terminal,
                                     const ConditionalExpectation& ce,
                                     const EnvelopeOptions& opt = {}) {
  const DriverPaths& d = ce.drivers();
  check_compatible(c, d);
  EnvelopeReport rep;
  rep.K = detail::require_growth(c, "envelope_solve");
  if (opt.levels.empty()) throw std::invalid_argument("envelope_solve: no levels given");
  for (std::size_t i = 0; i < opt.levels.size(); ++i) {
    if (!(opt.levels[i] >= rep.K))
      throw std::invalid_argument("envelope_solve: every level must be >= K = " +
                                  std::to_string(rep.K));
    if (i > 0 && !(opt.levels[i] > opt.levels[i - 1]))
      throw std::invalid_argument("envelope_solve: levels must be strictly increasing");
  }
  // The drift enters each node with weight dt, so the discrete Picard map
  // has slope n * dt in y at level n.
  double dt_max = 0.0;
  for (std::size_t k = 0; k < d.steps(); ++k) dt_max = std::max(dt_max, d.grid().dt(k));
  if (!(opt.levels.back() * dt_max < 1.0)) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "envelope_solve: level %g with step %g gives n*dt >= 1; the Picard map does "
                  "not contract, use more steps or lower levels",
                  opt.levels.back(), dt_max);
    throw std::invalid_argument(buf);
  }
  CloudSpec cs = opt.cloud;
  cs.horizon = d.grid().horizon();
  rep.validation = detail::validate_envelope_structure(c, rep.K, make_cloud(c, cs));
  if (!rep.validation.pass) {
    if (!opt.force)
      throw std::invalid_argument("envelope_solve: hypotheses fail: " + summarize(rep.validation));
    rep.forced = true;
  }

  if (std::isnan(opt.delta)) {
    const Calibration cal = calibrate_slack(ce, opt.picard);
    rep.calibration_error = cal.error;
    // Each solve stops within tol of its fixed point.
    rep.delta = std::max(cal.delta, 2.0 * opt.picard.tol);
  } else {
    if (!(opt.delta >= 0.0)) throw std::invalid_argument("envelope_solve: delta must be >= 0");
    rep.delta = opt.delta;
  }

  PicardOptions po = opt.picard;
  po.force = po.force || opt.force;
  for (std::size_t i = 0; i < opt.levels.size(); ++i) {
    EnvelopeLevel L;
    L.n = opt.levels[i];
    const auto ci = approximant_coefficients(c, inf_convolution(c, L.n, opt.search), d.grid());
    const auto cu = approximant_coefficients(c, sup_convolution(c, L.n, opt.search), d.grid());
    auto ri = detail::solve_level(ci, terminal, ce, po);
    auto ru = detail::solve_level(cu, terminal, ce, po);
    L.lower = std::move(ri.solution);
    L.upper = std::move(ru.solution);
    L.lower_diagnostics = std::move(ri.diagnostics);
    L.upper_diagnostics = std::move(ru.diagnostics);
    L.y0_lower = detail::mean_at_zero(L.lower);
    L.y0_upper = detail::mean_at_zero(L.upper);
    L.width = L.y0_upper - L.y0_lower;
    if (i > 0) {
      const auto gl = uniqueness_gap(L.lower, rep.levels.back().lower);
      const auto gu = uniqueness_gap(L.upper, rep.levels.back().upper);
      L.cauchy_Z_lower = gl.L2_Z_gap;
      L.cauchy_zeta_lower = gl.L2_zeta_gap;
      L.cauchy_Z_upper = gu.L2_Z_gap;
      L.cauchy_zeta_upper = gu.L2_zeta_gap;
    }
    rep.levels.push_back(std::move(L));
  }

  rep.bounds = bounding_solutions(rep.K > 0.0 ? rep.K : 1.0, c, terminal, ce, po);
  rep.y0_upper_bound = detail::mean_at_zero(rep.bounds.upper);
  rep.y0_lower_bound = detail::mean_at_zero(rep.bounds.lower);

  auto label = [](const char* kind, double n) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s level %g", kind, n);
    return std::string(buf);
  };
  const auto& lv = rep.levels;
  rep.links.push_back(detail::check_link("lower bound <= " + label("inf", lv.front().n),
                                         rep.bounds.lower, lv.front().lower, rep.delta));
  for (std::size_t i = 1; i < lv.size(); ++i)
    rep.links.push_back(detail::check_link(label("inf", lv[i - 1].n) + " <= " + label("inf", lv[i].n),
                                           lv[i - 1].lower, lv[i].lower, rep.delta));
  rep.links.push_back(detail::check_link(label("inf", lv.back().n) + " <= " + label("sup", lv.back().n),
                                         lv.back().lower, lv.back().upper, rep.delta));
  for (std::size_t i = lv.size() - 1; i > 0; --i)
    rep.links.push_back(detail::check_link(label("sup", lv[i].n) + " <= " + label("sup", lv[i - 1].n),
                                           lv[i].upper, lv[i - 1].upper, rep.delta));
  rep.links.push_back(detail::check_link(label("sup", lv.front().n) + " <= upper bound",
                                         lv.front().upper, rep.bounds.upper, rep.delta));
  for (const auto& l : rep.links) rep.monotone = rep.monotone && l.violations == 0;
  rep.limit_lower = lv.back().y0_lower;
  rep.limit_upper = lv.back().y0_upper;
  return rep;
}

}  // namespace bdsde
