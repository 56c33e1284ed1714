#pragma once

// Monte Carlo checks of the non-positivity lemma and the comparison
// theorems. Both equations of a pair are solved on the same DriverPaths;
// ordering is checked on every (node, path) pair of the grid.

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bdsde/coefficients.hpp"
#include "bdsde/solver.hpp"

namespace bdsde {

struct ComparisonOptions {
  double delta = std::numeric_limits<double>::quiet_NaN();  // NaN: calibrate
  double ceiling = 0.01;
  bool force = false;
  PicardOptions picard;
  CloudSpec cloud;
};

struct NodeGap {
  double t = 0.0;
  double mean_gap = 0.0;  // probability-weighted
  double max_gap = 0.0;
  std::size_t violations = 0;
};

struct ComparisonReport {
  std::string kind;
  double violation_fraction = 0.0;
  double max_positive_gap = 0.0;
  double delta = 0.0;
  double ceiling = 0.01;
  double calibration_error = std::numeric_limits<double>::quiet_NaN();
  std::vector<NodeGap> profile;
  bool pass = false;
  bool forced = false;
  std::vector<StructureReport> validation;
  std::vector<PicardDiagnostics> solver;

  std::string verdict() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "verdict=%s kind=%s violation_fraction=%.6g ceiling=%.6g delta=%.6g "
                  "max_positive_gap=%.6g forced=%d",
                  pass ? "pass" : "fail", kind.c_str(), violation_fraction, ceiling, delta,
                  max_positive_gap, forced ? 1 : 0);
    return buf;
  }
};

struct Calibration {
  double error = 0.0;  // max |(Y2 - Y1) - 2 (T - t)|
  double delta = 0.0;
};

namespace detail {

inline double delta_floor() { return 1e-12; }

inline PicardResult solve_or_throw(const CoefficientSet& c, const std::vector<double>& terminal,
                                   const ConditionalExpectation& ce, PicardOptions opt,
                                   bool force, const char* who) {
  opt.force = opt.force || force;
  PicardResult r = picard_solve(c, terminal, ce, opt);
  if (!r.diagnostics.converged)
    throw std::runtime_error(std::string(who) + ": Picard iteration for '" + c.name +
                             "' did not converge within " + std::to_string(opt.max_iter) +
                             " iterations");
  if (r.solution.drivers != &ce.drivers())
    throw std::logic_error(std::string(who) + ": solution is not coupled to the given drivers");
  return r;
}

// Fills profile, fractions and pass flag from gap(k, p).
template <class Gap>
void assemble_report(ComparisonReport& rep, const DriverPaths& d, Gap gap) {
  const std::size_t K = d.steps(), P = d.n_paths();
  rep.profile.assign(K + 1, {});
  double viol = 0.0;
  rep.max_positive_gap = 0.0;
  for (std::size_t k = 0; k <= K; ++k) {
    NodeGap& ng = rep.profile[k];
    ng.t = d.grid().node(k);
    ng.max_gap = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < P; ++p) {
      const double g = gap(k, p);
      const double w = d.path_weight(p);
      ng.mean_gap += w * g;
      ng.max_gap = std::max(ng.max_gap, g);
      if (g > rep.delta) {
        ++ng.violations;
        viol += w;
      }
    }
    rep.max_positive_gap = std::max(rep.max_positive_gap, ng.max_gap);
  }
  rep.violation_fraction = std::min(1.0, viol / static_cast<double>(K + 1));
  rep.pass = rep.violation_fraction <= rep.ceiling;
}

inline void resolve_delta(ComparisonReport& rep, const ComparisonOptions& opt,
                          const ConditionalExpectation& ce);

inline void require_pair_hypothesis(Hypothesis h, bool holder) {
  const bool ok = holder ? (h == Hypothesis::thm43a || h == Hypothesis::thm43b)
                         : (h == Hypothesis::thm41a || h == Hypothesis::thm41b);
  if (!ok)
    throw std::invalid_argument(std::string("comparison: hypothesis '") + to_string(h) +
                                "' does not apply to " +
                                (holder ? "the Hoelder comparison" : "the Lipschitz comparison"));
}

}  // namespace detail

// Coupled run with beta1 = -1, beta2 = +1 and everything else zero. The
// exact gap Y2 - Y1 is 2 (T - t).
inline Calibration calibrate_slack(const ConditionalExpectation& ce,
                                   const PicardOptions& picard = {}) {
  const DriverPaths& d = ce.drivers();
  CoefficientSet c1 = zero_coefficients(d.spaces(), d.brownian_dim());
  CoefficientSet c2 = c1;
  c1.name = "calibration:-1";
  c1.beta = [](double, double, Vec, Vec) { return -1.0; };
  c2.name = "calibration:+1";
  c2.beta = [](double, double, Vec, Vec) { return 1.0; };
  const std::vector<double> term(d.n_paths(), 0.0);
  const auto r1 = detail::solve_or_throw(c1, term, ce, picard, false, "calibrate_slack");
  const auto r2 = detail::solve_or_throw(c2, term, ce, picard, false, "calibrate_slack");
  Calibration cal;
  const double T = d.grid().horizon();
  for (std::size_t k = 0; k <= d.steps(); ++k)
    for (std::size_t p = 0; p < d.n_paths(); ++p) {
      const double gap = r2.solution.y(k, p) - r1.solution.y(k, p);
      cal.error = std::max(cal.error, std::abs(gap - 2.0 * (T - d.grid().node(k))));
    }
  cal.delta = std::max(3.0 * cal.error, detail::delta_floor());
  return cal;
}

namespace detail {

inline void resolve_delta(ComparisonReport& rep, const ComparisonOptions& opt,
                          const ConditionalExpectation& ce) {
  rep.ceiling = opt.ceiling;
  if (!(opt.ceiling >= 0.0 && opt.ceiling <= 1.0))
    throw std::invalid_argument("comparison: ceiling must lie in [0, 1]");
  if (std::isnan(opt.delta)) {
    const Calibration cal = calibrate_slack(ce, opt.picard);
    rep.calibration_error = cal.error;
    rep.delta = cal.delta;
    return;
  }
  if (!(opt.delta >= 0.0)) throw std::invalid_argument("comparison: delta must be >= 0");
  if (opt.delta == 0.0 && ce.spec().mode == RegressionMode::lsmc)
    throw std::invalid_argument(
        "comparison: delta = 0 is not meaningful with regression-based conditional "
        "expectations; leave delta unset to calibrate it");
  rep.delta = opt.delta;
}

inline void validate_or_throw(ComparisonReport& rep, const CoefficientSet& c, Hypothesis h,
                              const ComparisonOptions& opt, const char* who) {
  StructureReport sr = validate_comparison_structure(c, h, make_cloud(c, opt.cloud));
  const bool ok = sr.pass;
  const std::string text = summarize(sr);
  rep.validation.push_back(std::move(sr));
  if (!ok) {
    if (!opt.force)
      throw std::invalid_argument(std::string(who) + ": coefficient set '" + c.name +
                                  "' fails " + text + " (use force to run anyway)");
    rep.forced = true;
  }
}

// Shared sigma, g0, g1 and beta1 <= beta2, checked on the cloud points.
inline void check_pair_on_cloud(ComparisonReport& rep, const CoefficientSet& c1,
                                const CoefficientSet& c2, const ComparisonOptions& opt,
                                const char* who) {
  if (!(c1.spaces == c2.spaces) || c1.brownian_dim != c2.brownian_dim)
    throw std::invalid_argument(std::string(who) + ": the two coefficient sets use different spaces");
  const Cloud cloud = make_cloud(c1, opt.cloud);
  std::string drift_issue, noise_issue;
  for (const auto& pr : cloud) {
    for (const InputPoint* x : {&pr.a, &pr.b}) {
      const double b1 = eval_beta(c1, *x), b2 = eval_beta(c2, *x);
      if (drift_issue.empty() && b1 > b2 + slack(b2))
        drift_issue = "beta1 > beta2 at " + describe(*x);
      if (noise_issue.empty()) {
        const NoiseValues n1 = eval_noise(c1, *x), n2 = eval_noise(c2, *x);
        if (noise_gap_sq(c1, n1, n2) > 0.0)
          noise_issue = "sigma/g0/g1 differ at " + describe(*x);
      }
    }
    if (!drift_issue.empty() && !noise_issue.empty()) break;
  }
  for (const std::string* issue : {&drift_issue, &noise_issue}) {
    if (issue->empty()) continue;
    if (!opt.force) throw std::invalid_argument(std::string(who) + ": " + *issue);
    rep.forced = true;
  }
}

inline void check_terminals(ComparisonReport& rep, const std::vector<double>& t1,
                            const std::vector<double>& t2, const ComparisonOptions& opt,
                            const char* who) {
  if (t1.size() != t2.size())
    throw std::invalid_argument(std::string(who) + ": terminal sizes differ");
  for (std::size_t p = 0; p < t1.size(); ++p)
    if (t1[p] > t2[p]) {
      if (!opt.force)
        throw std::invalid_argument(std::string(who) + ": terminal1 > terminal2 on path " +
                                    std::to_string(p));
      rep.forced = true;
      return;
    }
}

inline ComparisonReport run_pair(const char* who, const CoefficientSet& c1,
                                 const CoefficientSet& c2, Hypothesis h, bool holder,
                                 const TerminalCondition& term1, const TerminalCondition& term2,
                                 const ConditionalExpectation& ce,
                                 const ComparisonOptions& opt) {
  require_pair_hypothesis(h, holder);
  const DriverPaths& d = ce.drivers();
  check_compatible(c1, d);
  check_compatible(c2, d);
  ComparisonReport rep;
  rep.kind = to_string(h);
  const bool first = h == Hypothesis::thm41a || h == Hypothesis::thm43a;
  validate_or_throw(rep, first ? c1 : c2, h, opt, who);
  check_pair_on_cloud(rep, c1, c2, opt, who);
  const std::vector<double> t1 = term1.realize(d), t2 = term2.realize(d);
  check_terminals(rep, t1, t2, opt, who);
  resolve_delta(rep, opt, ce);
  // the Hoelder case runs outside the Lipschitz contraction regime
  const bool force_solver = opt.force || holder;
  const auto r1 = solve_or_throw(c1, t1, ce, opt.picard, force_solver, who);
  const auto r2 = solve_or_throw(c2, t2, ce, opt.picard, force_solver, who);
  rep.solver = {r1.diagnostics, r2.diagnostics};
  assemble_report(rep, d, [&](std::size_t k, std::size_t p) {
    return r1.solution.y(k, p) - r2.solution.y(k, p);
  });
  return rep;
}

}  // namespace detail

// Solves the equation and reports violations of Y <= delta.
inline ComparisonReport nonpositivity_check(const CoefficientSet& c,
                                            const TerminalCondition& terminal,
                                            const ConditionalExpectation& ce,
                                            const ComparisonOptions& opt = {}) {
  const char* who = "nonpositivity_check";
  const DriverPaths& d = ce.drivers();
  check_compatible(c, d);
  ComparisonReport rep;
  rep.kind = "lemma41";
  detail::validate_or_throw(rep, c, Hypothesis::lemma41, opt, who);
  const std::vector<double> t = terminal.realize(d);
  detail::check_terminals(rep, t, std::vector<double>(t.size(), 0.0), opt, who);
  detail::resolve_delta(rep, opt, ce);
  const auto r = detail::solve_or_throw(c, t, ce, opt.picard, opt.force, who);
  rep.solver = {r.diagnostics};
  detail::assemble_report(rep, d, [&](std::size_t k, std::size_t p) { return r.solution.y(k, p); });
  return rep;
}

// Lipschitz comparison: shared sigma, g0, g1; hypothesis thm41a checks the
// drift of the first equation, thm41b that of the second.
inline ComparisonReport compare_pair(const CoefficientSet& c1, const CoefficientSet& c2,
                                     Hypothesis hypothesis, const TerminalCondition& term1,
                                     const TerminalCondition& term2,
                                     const ConditionalExpectation& ce,
                                     const ComparisonOptions& opt = {}) {
  return detail::run_pair("compare_pair", c1, c2, hypothesis, false, term1, term2, ce, opt);
}

// Hoelder comparison: drifts free of z, half-Hoelder noise coefficients.
inline ComparisonReport compare_pair_holder(const CoefficientSet& c1, const CoefficientSet& c2,
                                            Hypothesis hypothesis,
                                            const TerminalCondition& term1,
                                            const TerminalCondition& term2,
                                            const ConditionalExpectation& ce,
                                            const ComparisonOptions& opt = {}) {
  return detail::run_pair("compare_pair_holder", c1, c2, hypothesis, true, term1, term2, ce,
                          opt);
}

// Gap profile of two solutions already computed on the same drivers.
inline ComparisonReport coupled_gaps(const SolutionTriple& s1, const SolutionTriple& s2,
                                     double delta, double ceiling = 0.01) {
  if (s1.drivers == nullptr || s1.drivers != s2.drivers)
    throw std::invalid_argument("coupled_gaps: solutions were not computed on the same drivers");
  ComparisonReport rep;
  rep.kind = "coupled";
  rep.delta = delta;
  rep.ceiling = ceiling;
  detail::assemble_report(rep, *s1.drivers,
                          [&](std::size_t k, std::size_t p) { return s1.y(k, p) - s2.y(k, p); });
  return rep;
}

}  // namespace bdsde
