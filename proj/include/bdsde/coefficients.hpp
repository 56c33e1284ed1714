#pragma once

// Coefficient quadruple (beta, sigma, g0, g1) for a scalar state, with the
// structural metadata used by the existence and comparison results.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bdsde/drivers.hpp"
#include "bdsde/rng.hpp"

namespace bdsde {

using Vec = std::span<const double>;

// beta(s, y, z, zeta): z has n entries, zeta one entry per atom of F.
using DriftMap = std::function<double(double s, double y, Vec z, Vec zeta)>;
// sigma(s, y, z, e) written to out (n entries).
using DiffusionMap =
    std::function<void(double s, double y, Vec z, std::size_t atom, std::span<double> out)>;
using JumpMap = std::function<double(double s, double y, Vec z, std::size_t atom)>;

// beta = h(s, y, z) + sum_a kernel(s, a) * zeta_a * nu_a
struct DriftStructure {
  std::function<double(double s, double y, Vec z)> h;
  std::function<double(double s, std::size_t atom)> kernel;
  double K = 0.0;
};

struct CoefficientSet {
  std::string name;
  MarkSpaces spaces;
  std::size_t brownian_dim = 1;

  DriftMap beta;
  DiffusionMap sigma;
  JumpMap g0;
  JumpMap g1;

  double lipschitz_C = 0.0;
  double lipschitz_alpha = 0.0;
  // Constant for the half-Hoelder noise clauses; 0 means use lipschitz_C.
  double holder_C = 0.0;
  bool condition21 = false;
  bool drift_uses_z = true;
  // Lipschitz status of (sigma, g0, g1) alone and their squared constant.
  bool noise_lipschitz = true;
  double noise_C = 0.0;

  std::optional<DriftStructure> drift_structure;
  std::optional<double> growth_K;
};

inline DriftMap zero_drift() {
  return [](double, double, Vec, Vec) { return 0.0; };
}
inline DiffusionMap zero_diffusion() {
  return [](double, double, Vec, std::size_t, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
}
inline JumpMap zero_jump() {
  return [](double, double, Vec, std::size_t) { return 0.0; };
}

inline CoefficientSet zero_coefficients(const MarkSpaces& spaces, std::size_t n = 1) {
  CoefficientSet c;
  c.name = "zero";
  c.spaces = spaces;
  c.brownian_dim = n;
  c.beta = zero_drift();
  c.sigma = zero_diffusion();
  c.g0 = zero_jump();
  c.g1 = zero_jump();
  c.condition21 = true;
  c.drift_uses_z = false;
  return c;
}

// Drift built from a structure record: h plus the kernel integral.
inline DriftMap drift_from_structure(const DriftStructure& st, const DiscreteMeasureSpace& F) {
  return [st, F](double s, double y, Vec z, Vec zeta) {
    double v = st.h(s, y, z);
    for (std::size_t a = 0; a < F.size(); ++a) v += st.kernel(s, a) * zeta[a] * F.weight(a);
    return v;
  };
}

// ---------------------------------------------------------------------------
// Terminal conditions

struct TerminalCondition {
  enum class Kind { constant, brownian, path_functional, scripted };

  Kind kind = Kind::constant;
  std::string description = "constant:0";
  double value = 0.0;
  std::function<double(Vec brownian_at_T)> of_brownian;
  std::function<double(const DriverPaths&, std::size_t path)> functional;
  std::vector<double> scripted;

  static TerminalCondition constant(double c) {
    TerminalCondition t;
    t.kind = Kind::constant;
    t.value = c;
    std::ostringstream os;
    os << "constant:" << c;
    t.description = os.str();
    return t;
  }

  static TerminalCondition brownian(std::string name, std::function<double(Vec)> fn) {
    TerminalCondition t;
    t.kind = Kind::brownian;
    t.description = std::move(name);
    t.of_brownian = std::move(fn);
    return t;
  }

  static TerminalCondition path_functional(
      std::string name, std::function<double(const DriverPaths&, std::size_t)> fn) {
    TerminalCondition t;
    t.kind = Kind::path_functional;
    t.description = std::move(name);
    t.functional = std::move(fn);
    return t;
  }

  static TerminalCondition scripted_values(std::vector<double> values) {
    TerminalCondition t;
    t.kind = Kind::scripted;
    t.description = "scripted";
    t.scripted = std::move(values);
    return t;
  }

  std::vector<double> realize(const DriverPaths& d) const {
    const std::size_t P = d.n_paths(), n = d.brownian_dim(), K = d.steps();
    std::vector<double> out(P);
    switch (kind) {
      case Kind::constant:
        std::fill(out.begin(), out.end(), value);
        break;
      case Kind::brownian: {
        std::vector<double> b(n);
        for (std::size_t p = 0; p < P; ++p) {
          std::fill(b.begin(), b.end(), 0.0);
          for (std::size_t k = 0; k < K; ++k)
            for (std::size_t i = 0; i < n; ++i) b[i] += d.dB(k, p, i);
          out[p] = of_brownian(b);
        }
        break;
      }
      case Kind::path_functional:
        for (std::size_t p = 0; p < P; ++p) out[p] = functional(d, p);
        break;
      case Kind::scripted:
        if (scripted.size() != P)
          throw std::invalid_argument("terminal condition: scripted values do not match n_paths");
        out = scripted;
        break;
    }
    for (double v : out)
      if (!std::isfinite(v))
        throw std::invalid_argument("terminal condition '" + description + "' is not finite");
    return out;
  }
};

// B_T (first component)
inline TerminalCondition terminal_brownian_identity() {
  return TerminalCondition::brownian("brownian", [](Vec b) { return b[0]; });
}
// -|B_T|
inline TerminalCondition terminal_neg_abs_brownian() {
  return TerminalCondition::brownian("neg_abs_brownian", [](Vec b) { return -std::abs(b[0]); });
}
// total number of forward jumps of M on [0, T]
inline TerminalCondition terminal_forward_jump_count() {
  return TerminalCondition::path_functional("mcount", [](const DriverPaths& d, std::size_t p) {
    double c = 0.0;
    for (std::size_t k = 0; k < d.steps(); ++k)
      for (std::size_t a = 0; a < d.spaces().F.size(); ++a) c += d.M(k, p, a);
    return c;
  });
}

// ---------------------------------------------------------------------------
// Evaluation helpers

struct InputPoint {
  double s = 0.0;
  double y = 0.0;
  std::vector<double> z;
  std::vector<double> zeta;
};

struct InputPair {
  enum class Kind { general, y_only, z_zeta_only };
  Kind kind = Kind::general;
  InputPoint a, b;
};

using Cloud = std::vector<InputPair>;

struct CloudSpec {
  std::size_t n_pairs = 3000;
  double horizon = 1.0;
  double y_radius = 4.0;
  double z_radius = 4.0;
  double zeta_radius = 2.0;
  std::uint64_t seed = 0x5EED;
};

// Pairs cycle through three kinds: general, equal (z, zeta), equal y. Pair
// i depends only on (seed, i), so a larger cloud extends a smaller one.
inline Cloud make_cloud(std::size_t brownian_dim, std::size_t n_jump_atoms,
                        const CloudSpec& spec = {}) {
  if (spec.n_pairs == 0) throw std::invalid_argument("make_cloud: n_pairs must be >= 1");
  Cloud cloud(spec.n_pairs);
  for (std::size_t i = 0; i < spec.n_pairs; ++i) {
    Stream st(spec.seed, StreamFamily::cloud, static_cast<std::uint32_t>(i), 0, 0);
    auto sym = [&](double r) { return r * (2.0 * st.uniform() - 1.0); };
    // perturbation scale log-uniform in [1e-4, 2]
    auto step = [&](double r) {
      const double mag = std::pow(10.0, -4.0 + 4.3 * st.uniform()) * r * 0.5;
      return st.uniform() < 0.5 ? -mag : mag;
    };
    InputPair& pr = cloud[i];
    pr.kind = static_cast<InputPair::Kind>(i % 3);
    pr.a.s = spec.horizon * st.uniform();
    pr.a.y = sym(spec.y_radius);
    pr.a.z.resize(brownian_dim);
    for (double& v : pr.a.z) v = sym(spec.z_radius);
    pr.a.zeta.resize(n_jump_atoms);
    for (double& v : pr.a.zeta) v = sym(spec.zeta_radius);
    pr.b = pr.a;
    if (pr.kind != InputPair::Kind::z_zeta_only) pr.b.y += step(spec.y_radius);
    if (pr.kind != InputPair::Kind::y_only) {
      for (double& v : pr.b.z) v += step(spec.z_radius);
      for (double& v : pr.b.zeta) v += step(spec.zeta_radius);
    }
  }
  return cloud;
}

inline Cloud make_cloud(const CoefficientSet& c, const CloudSpec& spec = {}) {
  return make_cloud(c.brownian_dim, c.spaces.F.size(), spec);
}

namespace detail {

inline double checked(double v, const char* map, const InputPoint& x) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "coefficient map '" << map << "' returned a non-finite value at s=" << x.s
       << " y=" << x.y;
    throw std::runtime_error(os.str());
  }
  return v;
}

template <class Fn>
double guarded(const char* map, const InputPoint& x, Fn&& fn) {
  double v;
  try {
    v = fn();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("coefficient map '") + map + "' failed: " + e.what());
  }
  return checked(v, map, x);
}

struct NoiseValues {
  std::vector<double> sigma;  // |E| x n
  std::vector<double> g0, g1;
};

inline double eval_beta(const CoefficientSet& c, const InputPoint& x) {
  return guarded("beta", x, [&] { return c.beta(x.s, x.y, x.z, x.zeta); });
}

inline NoiseValues eval_noise(const CoefficientSet& c, const InputPoint& x) {
  const std::size_t n = c.brownian_dim;
  NoiseValues v;
  v.sigma.assign(c.spaces.E.size() * n, 0.0);
  for (std::size_t e = 0; e < c.spaces.E.size(); ++e) {
    try {
      c.sigma(x.s, x.y, x.z, e, std::span<double>(v.sigma.data() + e * n, n));
    } catch (const std::exception& ex) {
      throw std::runtime_error(std::string("coefficient map 'sigma' failed: ") + ex.what());
    }
    for (std::size_t i = 0; i < n; ++i) checked(v.sigma[e * n + i], "sigma", x);
  }
  for (std::size_t u = 0; u < c.spaces.U0.size(); ++u)
    v.g0.push_back(guarded("g0", x, [&] { return c.g0(x.s, x.y, x.z, u); }));
  for (std::size_t u = 0; u < c.spaces.U1.size(); ++u)
    v.g1.push_back(guarded("g1", x, [&] { return c.g1(x.s, x.y, x.z, u); }));
  return v;
}

// ||s1 - s2||^2_pi + ||g0 - g0'||^2_mu0 + ||g1 - g1'||^2_mu1
inline double noise_gap_sq(const CoefficientSet& c, const NoiseValues& p, const NoiseValues& q) {
  const std::size_t n = c.brownian_dim;
  double acc = 0.0;
  for (std::size_t e = 0; e < c.spaces.E.size(); ++e)
    for (std::size_t i = 0; i < n; ++i) {
      const double d = p.sigma[e * n + i] - q.sigma[e * n + i];
      acc += d * d * c.spaces.E.weight(e);
    }
  for (std::size_t u = 0; u < p.g0.size(); ++u)
    acc += (p.g0[u] - q.g0[u]) * (p.g0[u] - q.g0[u]) * c.spaces.U0.weight(u);
  for (std::size_t u = 0; u < p.g1.size(); ++u)
    acc += (p.g1[u] - q.g1[u]) * (p.g1[u] - q.g1[u]) * c.spaces.U1.weight(u);
  return acc;
}

inline double sq_norm(Vec v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double zeta_sq_norm(const DiscreteMeasureSpace& F, Vec a, Vec b) {
  double s = 0.0;
  for (std::size_t i = 0; i < F.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]) * F.weight(i);
  return s;
}

inline double diff_sq(Vec a, Vec b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline std::string describe(const InputPoint& x) {
  std::ostringstream os;
  os << "(s=" << x.s << ", y=" << x.y << ", z=[";
  for (std::size_t i = 0; i < x.z.size(); ++i) os << (i ? "," : "") << x.z[i];
  os << "], zeta=[";
  for (std::size_t i = 0; i < x.zeta.size(); ++i) os << (i ? "," : "") << x.zeta[i];
  os << "])";
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Lipschitz estimation

struct LipschitzEstimate {
  double C_hat = 0.0;        // max of the two C ratios below
  double C_drift = 0.0;      // sup |d beta|^2 / (|dy|^2 + |dz|^2 + ||d zeta||^2)
  double C_noise = 0.0;      // sup noise gap / |dy|^2 over pairs with equal (z, zeta)
  double alpha_hat = 0.0;    // sup noise gap / (|dz|^2 + ||d zeta||^2) over pairs with equal y
  std::size_t worst_pair = 0;
  std::string worst_ratio;   // which ratio attained C_hat
};

inline LipschitzEstimate estimate_lipschitz(const CoefficientSet& c, const Cloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("estimate_lipschitz: empty cloud");
  LipschitzEstimate est;
  std::size_t worst_drift = 0, worst_noise = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& pr = cloud[i];
    const double dy2 = (pr.a.y - pr.b.y) * (pr.a.y - pr.b.y);
    const double dz2 = detail::diff_sq(pr.a.z, pr.b.z);
    const double dzeta2 = detail::zeta_sq_norm(c.spaces.F, pr.a.zeta, pr.b.zeta);
    const double db = detail::eval_beta(c, pr.a) - detail::eval_beta(c, pr.b);
    const double denom = dy2 + dz2 + dzeta2;
    if (denom > 0.0) {
      const double r = db * db / denom;
      if (r > est.C_drift) {
        est.C_drift = r;
        worst_drift = i;
      }
    }
    const double gap = detail::noise_gap_sq(c, detail::eval_noise(c, pr.a),
                                            detail::eval_noise(c, pr.b));
    if (pr.kind == InputPair::Kind::y_only && dy2 > 0.0) {
      const double r = gap / dy2;
      if (r > est.C_noise) {
        est.C_noise = r;
        worst_noise = i;
      }
    } else if (pr.kind == InputPair::Kind::z_zeta_only && dz2 + dzeta2 > 0.0) {
      est.alpha_hat = std::max(est.alpha_hat, gap / (dz2 + dzeta2));
    }
  }
  if (est.C_drift >= est.C_noise) {
    est.C_hat = est.C_drift;
    est.worst_pair = worst_drift;
    est.worst_ratio = "drift";
  } else {
    est.C_hat = est.C_noise;
    est.worst_pair = worst_noise;
    est.worst_ratio = "noise";
  }
  return est;
}

// ---------------------------------------------------------------------------
// Structural validation for the comparison results

enum class Hypothesis { lemma41, thm41a, thm41b, thm43a, thm43b, prop41, remark41_4prime };

inline Hypothesis parse_hypothesis(std::string_view s) {
  if (s == "lemma41") return Hypothesis::lemma41;
  if (s == "thm41a") return Hypothesis::thm41a;
  if (s == "thm41b") return Hypothesis::thm41b;
  if (s == "thm43a") return Hypothesis::thm43a;
  if (s == "thm43b") return Hypothesis::thm43b;
  if (s == "prop41") return Hypothesis::prop41;
  if (s == "remark41_4prime") return Hypothesis::remark41_4prime;
  throw std::invalid_argument("unknown hypothesis label '" + std::string(s) + "'");
}

inline const char* to_string(Hypothesis h) {
  switch (h) {
    case Hypothesis::lemma41: return "lemma41";
    case Hypothesis::thm41a: return "thm41a";
    case Hypothesis::thm41b: return "thm41b";
    case Hypothesis::thm43a: return "thm43a";
    case Hypothesis::thm43b: return "thm43b";
    case Hypothesis::prop41: return "prop41";
    case Hypothesis::remark41_4prime: return "remark41_4prime";
  }
  return "?";
}

struct ClauseResult {
  std::string clause;
  bool pass = true;
  std::size_t checked = 0;
  double worst_excess = 0.0;
  std::string counterexample;
};

struct StructureReport {
  Hypothesis hypothesis = Hypothesis::lemma41;
  bool pass = true;
  // Set for hypotheses whose conclusions are stated without proof; a pass
  // here is informational only.
  bool advisory = false;
  std::vector<ClauseResult> clauses;

  const ClauseResult* first_violation() const {
    for (const auto& c : clauses)
      if (!c.pass) return &c;
    return nullptr;
  }
};

namespace detail {

inline double slack(double scale) { return 1e-9 * (1.0 + std::abs(scale)); }

class ClauseCheck {
 public:
  explicit ClauseCheck(std::string name) { r_.clause = std::move(name); }

  // Records lhs <= rhs (with rounding slack).
  void le(double lhs, double rhs, const std::string& where) {
    ++r_.checked;
    const double excess = lhs - rhs;
    if (excess > slack(std::max(std::abs(lhs), std::abs(rhs)))) {
      if (r_.pass || excess > r_.worst_excess) {
        if (r_.pass) r_.counterexample = where;
        r_.worst_excess = std::max(r_.worst_excess, excess);
      }
      r_.pass = false;
    }
  }

  ClauseResult result() && { return std::move(r_); }

 private:
  ClauseResult r_;
};

inline std::vector<double> zero_z(const CoefficientSet& c) {
  return std::vector<double>(c.brownian_dim, 0.0);
}

// Clause: y + g_i(s, y, u) <= 0 whenever y <= 0.
inline ClauseResult check_jump_nonpositive(const CoefficientSet& c, const Cloud& cloud) {
  ClauseCheck ck("jump maps keep nonpositive states nonpositive");
  for (const auto& pr : cloud) {
    InputPoint x = pr.a;
    x.y = -std::abs(x.y);
    const auto nv = eval_noise(c, x);
    for (std::size_t u = 0; u < nv.g0.size(); ++u)
      ck.le(x.y + nv.g0[u], 0.0, "g0 atom " + c.spaces.U0.atom(u).label + " at " + describe(x));
    for (std::size_t u = 0; u < nv.g1.size(); ++u)
      ck.le(x.y + nv.g1[u], 0.0, "g1 atom " + c.spaces.U1.atom(u).label + " at " + describe(x));
  }
  return std::move(ck).result();
}

// Clause: ||sigma||^2 + ||g0||^2 + ||g1||^2 <= C|y|^2 + alpha|z|^2, alpha < 1.
inline ClauseResult check_noise_growth(const CoefficientSet& c, const Cloud& cloud) {
  ClauseCheck ck("noise growth bound with alpha < 1");
  ck.le(c.lipschitz_alpha, std::nextafter(1.0, 0.0), "declared alpha");
  const NoiseValues zero{std::vector<double>(c.spaces.E.size() * c.brownian_dim, 0.0),
                         std::vector<double>(c.spaces.U0.size(), 0.0),
                         std::vector<double>(c.spaces.U1.size(), 0.0)};
  for (const auto& pr : cloud) {
    const double lhs = noise_gap_sq(c, eval_noise(c, pr.a), zero);
    ck.le(lhs, c.lipschitz_C * pr.a.y * pr.a.y + c.lipschitz_alpha * sq_norm(pr.a.z),
          describe(pr.a));
  }
  return std::move(ck).result();
}

// Clause: y + g_i(s, y, u) nondecreasing in y.
inline ClauseResult check_jump_monotone(const CoefficientSet& c, const Cloud& cloud) {
  ClauseCheck ck("y + g_i nondecreasing in y");
  for (const auto& pr : cloud) {
    InputPoint lo = pr.a, hi = pr.a;
    lo.y = std::min(pr.a.y, pr.b.y);
    hi.y = std::max(pr.a.y, pr.b.y);
    const auto nl = eval_noise(c, lo), nh = eval_noise(c, hi);
    for (std::size_t u = 0; u < nl.g0.size(); ++u)
      ck.le(lo.y + nl.g0[u], hi.y + nh.g0[u],
            "g0 atom " + c.spaces.U0.atom(u).label + " between " + describe(lo) + " and " +
                describe(hi));
    for (std::size_t u = 0; u < nl.g1.size(); ++u)
      ck.le(lo.y + nl.g1[u], hi.y + nh.g1[u],
            "g1 atom " + c.spaces.U1.atom(u).label + " between " + describe(lo) + " and " +
                describe(hi));
  }
  return std::move(ck).result();
}

// Clause: g_i depends on (s, y, u) only.
inline ClauseResult check_jump_z_free(const CoefficientSet& c, const Cloud& cloud) {
  ClauseCheck ck("jump maps independent of z");
  for (const auto& pr : cloud) {
    InputPoint other = pr.a;
    other.z = pr.b.z;
    const auto p = eval_noise(c, pr.a), q = eval_noise(c, other);
    for (std::size_t u = 0; u < p.g0.size(); ++u)
      ck.le(std::abs(p.g0[u] - q.g0[u]), 0.0, "g0 at " + describe(pr.a));
    for (std::size_t u = 0; u < p.g1.size(); ++u)
      ck.le(std::abs(p.g1[u] - q.g1[u]), 0.0, "g1 at " + describe(pr.a));
  }
  return std::move(ck).result();
}

// Clause (Lipschitz form): noise gap <= C|dy|^2 + alpha|dz|^2, alpha < 1.
inline ClauseResult check_noise_lipschitz(const CoefficientSet& c, const Cloud& cloud) {
  ClauseCheck ck("noise Lipschitz bound with alpha < 1");
  ck.le(c.lipschitz_alpha, std::nextafter(1.0, 0.0), "declared alpha");
  for (const auto& pr : cloud) {
    const double gap = noise_gap_sq(c, eval_noise(c, pr.a), eval_noise(c, pr.b));
    const double dy = pr.a.y - pr.b.y;
    ck.le(gap, c.lipschitz_C * dy * dy + c.lipschitz_alpha * diff_sq(pr.a.z, pr.b.z),
          describe(pr.a) + " vs " + describe(pr.b));
  }
  return std::move(ck).result();
}

// Clauses (Hoelder form):
//   sum |dg0|^2 mu0 + sum |dg1| mu1 <= C|dy|
//   sum |dsigma|^2 pi <= C|dy| + alpha|dz|^2, alpha <= 1.
inline std::vector<ClauseResult> check_noise_holder(const CoefficientSet& c,
                                                    const Cloud& cloud) {
  ClauseCheck jumps("jump maps half-Hoelder bound");
  ClauseCheck diff("white-noise coefficient half-Hoelder bound with alpha <= 1");
  diff.le(c.lipschitz_alpha, 1.0, "declared alpha");
  const double C = c.holder_C > 0.0 ? c.holder_C : c.lipschitz_C;
  const std::size_t n = c.brownian_dim;
  for (const auto& pr : cloud) {
    const auto p = eval_noise(c, pr.a), q = eval_noise(c, pr.b);
    const double dy = std::abs(pr.a.y - pr.b.y);
    double jl = 0.0;
    for (std::size_t u = 0; u < p.g0.size(); ++u)
      jl += (p.g0[u] - q.g0[u]) * (p.g0[u] - q.g0[u]) * c.spaces.U0.weight(u);
    for (std::size_t u = 0; u < p.g1.size(); ++u)
      jl += std::abs(p.g1[u] - q.g1[u]) * c.spaces.U1.weight(u);
    jumps.le(jl, C * dy, describe(pr.a) + " vs " + describe(pr.b));
    double sl = 0.0;
    for (std::size_t e = 0; e < c.spaces.E.size(); ++e)
      for (std::size_t i = 0; i < n; ++i) {
        const double d = p.sigma[e * n + i] - q.sigma[e * n + i];
        sl += d * d * c.spaces.E.weight(e);
      }
    diff.le(sl, C * dy + c.lipschitz_alpha * diff_sq(pr.a.z, pr.b.z),
            describe(pr.a) + " vs " + describe(pr.b));
  }
  return {std::move(jumps).result(), std::move(diff).result()};
}

inline ClauseResult check_drift_z_free(const CoefficientSet& c, const Cloud& cloud) {
  ClauseCheck ck("drift independent of z");
  for (const auto& pr : cloud) {
    InputPoint other = pr.a;
    other.z = pr.b.z;
    ck.le(std::abs(eval_beta(c, pr.a) - eval_beta(c, other)), 0.0, describe(pr.a));
  }
  return std::move(ck).result();
}

enum class KernelRange { at_least_minus_one, at_most_one, minus_one_to_zero, zero_to_one };
enum class HForm { growth, lipschitz_yz, lipschitz_y };

// Drift-structure clauses: beta agrees with h + kernel integral, bound on h,
// range of the kernel and its integral bound.
inline std::vector<ClauseResult> check_drift_structure(const CoefficientSet& c,
                                                       const Cloud& cloud, HForm hform,
                                                       KernelRange range, bool squared_integral) {
  std::vector<ClauseResult> out;
  if (!c.drift_structure) {
    ClauseResult r;
    r.clause = "drift structure record present";
    r.pass = false;
    r.checked = 1;
    r.counterexample = "coefficient set '" + c.name + "' declares no drift structure";
    out.push_back(r);
    return out;
  }
  const auto& st = *c.drift_structure;
  const auto& F = c.spaces.F;

  ClauseCheck consistent("drift equals h plus kernel integral");
  ClauseCheck hbound(hform == HForm::growth ? "|h| <= K(|y| + |z|)"
                     : hform == HForm::lipschitz_yz ? "h is K-Lipschitz in (y, z)"
                                                    : "h is K-Lipschitz in y");
  const char* range_name = range == KernelRange::at_least_minus_one ? "kernel >= -1"
                           : range == KernelRange::at_most_one      ? "kernel <= 1"
                           : range == KernelRange::minus_one_to_zero ? "kernel in [-1, 0]"
                                                                     : "kernel in [0, 1]";
  ClauseCheck krange(range_name);
  ClauseCheck kint(squared_integral ? "integral of kernel^2 against nu <= K"
                                    : "integral of |kernel| against nu <= K");

  for (const auto& pr : cloud) {
    const InputPoint& x = pr.a;
    double structured = st.h(x.s, x.y, x.z);
    for (std::size_t a = 0; a < F.size(); ++a)
      structured += st.kernel(x.s, a) * x.zeta[a] * F.weight(a);
    const double b = eval_beta(c, x);
    consistent.le(std::abs(b - structured), 1e-12 * (1.0 + std::abs(b)), describe(x));

    switch (hform) {
      case HForm::growth:
        hbound.le(std::abs(st.h(x.s, x.y, x.z)),
                  st.K * (std::abs(x.y) + std::sqrt(sq_norm(x.z))), describe(x));
        break;
      case HForm::lipschitz_yz:
        hbound.le(std::abs(st.h(x.s, x.y, x.z) - st.h(pr.b.s, pr.b.y, pr.b.z)),
                  st.K * (std::abs(x.y - pr.b.y) + std::sqrt(diff_sq(x.z, pr.b.z))),
                  describe(x) + " vs " + describe(pr.b));
        break;
      case HForm::lipschitz_y: {
        const auto z0 = zero_z(c);
        hbound.le(std::abs(st.h(x.s, x.y, z0) - st.h(x.s, pr.b.y, z0)),
                  st.K * std::abs(x.y - pr.b.y), describe(x) + " vs " + describe(pr.b));
        break;
      }
    }

    double integral = 0.0;
    for (std::size_t a = 0; a < F.size(); ++a) {
      const double k = st.kernel(x.s, a);
      const std::string where = "atom " + F.atom(a).label + " at s=" + std::to_string(x.s);
      switch (range) {
        case KernelRange::at_least_minus_one: krange.le(-1.0, k, where); break;
        case KernelRange::at_most_one: krange.le(k, 1.0, where); break;
        case KernelRange::minus_one_to_zero:
          krange.le(-1.0, k, where);
          krange.le(k, 0.0, where);
          break;
        case KernelRange::zero_to_one:
          krange.le(0.0, k, where);
          krange.le(k, 1.0, where);
          break;
      }
      integral += (squared_integral ? k * k : std::abs(k)) * F.weight(a);
    }
    kint.le(integral, st.K, "s=" + std::to_string(x.s));
  }
  out.push_back(std::move(consistent).result());
  out.push_back(std::move(hbound).result());
  out.push_back(std::move(krange).result());
  out.push_back(std::move(kint).result());
  return out;
}

// |beta| <= K(|y| + |z|) + sum C |zeta| nu (absolute form) or the same
// bound on differences, with 0 <= C <= 1 and sum C^2 nu <= K.
inline std::vector<ClauseResult> check_drift_abs_bound(const CoefficientSet& c,
                                                       const Cloud& cloud, bool differences) {
  std::vector<ClauseResult> out;
  if (!c.drift_structure) {
    ClauseResult r;
    r.clause = "drift structure record present";
    r.pass = false;
    r.checked = 1;
    r.counterexample = "coefficient set '" + c.name + "' declares no kernel or K";
    out.push_back(r);
    return out;
  }
  const auto& st = *c.drift_structure;
  const auto& F = c.spaces.F;
  ClauseCheck bound(differences ? "|d beta| <= K(|dy| + |dz|) + int C|d zeta| nu"
                                : "|beta| <= K(|y| + |z|) + int C|zeta| nu");
  ClauseCheck krange("kernel in [0, 1]");
  ClauseCheck kint("integral of kernel^2 against nu <= K");
  for (const auto& pr : cloud) {
    const InputPoint& x = pr.a;
    double jumpterm = 0.0, integral = 0.0;
    for (std::size_t a = 0; a < F.size(); ++a) {
      const double k = st.kernel(x.s, a);
      const double dz = differences ? x.zeta[a] - pr.b.zeta[a] : x.zeta[a];
      jumpterm += k * std::abs(dz) * F.weight(a);
      integral += k * k * F.weight(a);
      krange.le(0.0, k, "atom " + F.atom(a).label);
      krange.le(k, 1.0, "atom " + F.atom(a).label);
    }
    kint.le(integral, st.K, "s=" + std::to_string(x.s));
    if (differences) {
      bound.le(std::abs(eval_beta(c, x) - eval_beta(c, pr.b)),
               st.K * (std::abs(x.y - pr.b.y) + std::sqrt(diff_sq(x.z, pr.b.z))) + jumpterm,
               describe(x) + " vs " + describe(pr.b));
    } else {
      bound.le(std::abs(eval_beta(c, x)), st.K * (std::abs(x.y) + std::sqrt(sq_norm(x.z))) + jumpterm,
               describe(x));
    }
  }
  out.push_back(std::move(bound).result());
  out.push_back(std::move(krange).result());
  out.push_back(std::move(kint).result());
  return out;
}

}  // namespace detail

// Samples the hypotheses of the chosen result on the cloud. Declared
// lipschitz_C / lipschitz_alpha serve as the constants C, alpha in the
// noise clauses; drift_structure supplies h, the kernel and K.
inline StructureReport validate_comparison_structure(const CoefficientSet& c,
                                                     Hypothesis hypothesis,
                                                     const Cloud& cloud) {
  using namespace detail;
  if (cloud.empty()) throw std::invalid_argument("validate_comparison_structure: empty cloud");
  StructureReport rep;
  rep.hypothesis = hypothesis;
  auto add = [&](ClauseResult r) { rep.clauses.push_back(std::move(r)); };
  auto add_all = [&](std::vector<ClauseResult> rs) {
    for (auto& r : rs) rep.clauses.push_back(std::move(r));
  };

  switch (hypothesis) {
    case Hypothesis::lemma41:
      add(check_jump_nonpositive(c, cloud));
      add(check_noise_growth(c, cloud));
      add_all(check_drift_structure(c, cloud, HForm::growth, KernelRange::at_least_minus_one, true));
      break;
    case Hypothesis::thm41a:
    case Hypothesis::thm41b:
      add(check_jump_monotone(c, cloud));
      add(check_jump_z_free(c, cloud));
      add(check_noise_lipschitz(c, cloud));
      add_all(check_drift_structure(c, cloud, HForm::lipschitz_yz,
                                    hypothesis == Hypothesis::thm41a
                                        ? KernelRange::at_least_minus_one
                                        : KernelRange::at_most_one,
                                    true));
      break;
    case Hypothesis::thm43a:
    case Hypothesis::thm43b:
      add(check_jump_monotone(c, cloud));
      add(check_jump_z_free(c, cloud));
      add_all(check_noise_holder(c, cloud));
      add(check_drift_z_free(c, cloud));
      add_all(check_drift_structure(c, cloud, HForm::lipschitz_y,
                                    hypothesis == Hypothesis::thm43a
                                        ? KernelRange::minus_one_to_zero
                                        : KernelRange::zero_to_one,
                                    false));
      break;
    case Hypothesis::prop41:
      rep.advisory = true;
      add(check_jump_nonpositive(c, cloud));
      add(check_noise_growth(c, cloud));
      add_all(check_drift_abs_bound(c, cloud, false));
      break;
    case Hypothesis::remark41_4prime:
      rep.advisory = true;
      add(check_jump_monotone(c, cloud));
      add(check_jump_z_free(c, cloud));
      add(check_noise_lipschitz(c, cloud));
      add_all(check_drift_abs_bound(c, cloud, true));
      break;
  }
  rep.pass = true;
  for (const auto& r : rep.clauses) rep.pass = rep.pass && r.pass;
  return rep;
}

inline std::string summarize(const StructureReport& r) {
  std::ostringstream os;
  os << to_string(r.hypothesis) << ": " << (r.pass ? "pass" : "fail");
  if (r.advisory) os << " (advisory)";
  if (const auto* v = r.first_violation())
    os << "; first violated clause '" << v->clause << "' at " << v->counterexample;
  return os.str();
}

}  // namespace bdsde
