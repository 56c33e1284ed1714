#pragma once

// CSV exports and whitespace-delimited plot data. Numbers are written with
// %.17g so repeated runs give byte-identical files.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "bdsde/comparison.hpp"
#include "bdsde/envelope.hpp"
#include "bdsde/solver.hpp"

namespace bdsde {

namespace detail {

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// k,t,p,Y,Z0..,zeta_<atom>..
inline void write_solution_csv(std::ostream& os, const SolutionTriple& s) {
  using detail::num;
  const auto& d = *s.drivers;
  const auto& F = d.spaces().F;
  os << "k,t,p,Y";
  for (std::size_t i = 0; i < s.n; ++i) os << ",Z" << i;
  for (std::size_t a = 0; a < s.nF; ++a) os << ",zeta_" << F.atom(a).label;
  os << '\n';
  for (std::size_t k = 0; k <= s.K; ++k)
    for (std::size_t p = 0; p < s.P; ++p) {
      os << k << ',' << num(d.grid().node(k)) << ',' << p << ',' << num(s.y(k, p));
      for (std::size_t i = 0; i < s.n; ++i) os << ',' << num(s.Z[(k * s.P + p) * s.n + i]);
      for (std::size_t a = 0; a < s.nF; ++a) os << ',' << num(s.zeta[(k * s.P + p) * s.nF + a]);
      os << '\n';
    }
}

inline void write_picard_csv(std::ostream& os, const PicardDiagnostics& diag) {
  using detail::num;
  os << "iteration,weighted_norm,y_part,z_part,zeta_part,sup_y,ratio\n";
  for (const auto& r : diag.iterations)
    os << r.iteration << ',' << num(std::sqrt(r.diff.weighted_sq)) << ',' << num(r.diff.y_part)
       << ',' << num(r.diff.z_part) << ',' << num(r.diff.zeta_part) << ',' << num(r.diff.sup_y)
       << ',' << num(r.ratio) << '\n';
}

inline void write_gap_profile_csv(std::ostream& os, const ComparisonReport& rep) {
  using detail::num;
  os << "t,mean_gap,max_gap,violations\n";
  for (const auto& g : rep.profile)
    os << num(g.t) << ',' << num(g.mean_gap) << ',' << num(g.max_gap) << ',' << g.violations
       << '\n';
}

inline void write_envelope_csv(std::ostream& os, const EnvelopeReport& rep) {
  using detail::num;
  os << "n,y0_lower,y0_upper,width,cauchy_Z_lower,cauchy_zeta_lower,cauchy_Z_upper,"
        "cauchy_zeta_upper\n";
  for (const auto& L : rep.levels)
    os << num(L.n) << ',' << num(L.y0_lower) << ',' << num(L.y0_upper) << ',' << num(L.width)
       << ',' << num(L.cauchy_Z_lower) << ',' << num(L.cauchy_zeta_lower) << ','
       << num(L.cauchy_Z_upper) << ',' << num(L.cauchy_zeta_upper) << '\n';
}

inline void write_links_csv(std::ostream& os, const EnvelopeReport& rep) {
  os << "link,violations,worst_excess\n";
  for (const auto& l : rep.links)
    os << l.name << ',' << l.violations << ',' << detail::num(l.worst_excess) << '\n';
}

struct ItoRow {
  std::size_t steps = 0;
  double mean_abs_residual = 0.0;
  double ratio = std::nan("");  // against the previous row
};

inline void write_ito_csv(std::ostream& os, const std::vector<ItoRow>& rows) {
  os << "K,mean_abs_residual,ratio\n";
  for (const auto& r : rows)
    os << r.steps << ',' << detail::num(r.mean_abs_residual) << ',' << detail::num(r.ratio) << '\n';
}

// Plot data: one '#' header line naming the columns, then rows separated by
// single spaces.
inline void plot_gap_profile(std::ostream& os, const ComparisonReport& rep) {
  using detail::num;
  os << "# t mean_gap max_gap violations\n";
  for (const auto& g : rep.profile)
    os << num(g.t) << ' ' << num(g.mean_gap) << ' ' << num(g.max_gap) << ' ' << g.violations
       << '\n';
}

inline void plot_convergence(std::ostream& os, const PicardDiagnostics& diag) {
  using detail::num;
  os << "# iteration weighted_norm sup_y ratio\n";
  for (const auto& r : diag.iterations)
    os << r.iteration << ' ' << num(std::sqrt(r.diff.weighted_sq)) << ' ' << num(r.diff.sup_y)
       << ' ' << num(r.ratio) << '\n';
}

inline void plot_envelope(std::ostream& os, const EnvelopeReport& rep) {
  using detail::num;
  os << "# n y0_lower y0_upper width y0_lower_bound y0_upper_bound\n";
  for (const auto& L : rep.levels)
    os << num(L.n) << ' ' << num(L.y0_lower) << ' ' << num(L.y0_upper) << ' ' << num(L.width)
       << ' ' << num(rep.y0_lower_bound) << ' ' << num(rep.y0_upper_bound) << '\n';
}

inline void plot_ito(std::ostream& os, const std::vector<ItoRow>& rows) {
  os << "# K mean_abs_residual\n";
  for (const auto& r : rows) os << r.steps << ' ' << detail::num(r.mean_abs_residual) << '\n';
}

}  // namespace bdsde
