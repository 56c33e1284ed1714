#pragma once

// Named coefficient families selectable from configuration strings of the
// form "name" or "name:p1,p2,...". New families can be registered at run
// time with register_drift_family / register_diffusion_family /
// register_jump_family.

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bdsde/coefficients.hpp"

namespace bdsde {

struct FamilySpec {
  std::string name;
  std::vector<double> params;

  static FamilySpec parse(std::string_view text) {
    FamilySpec f;
    const auto colon = text.find(':');
    f.name = std::string(text.substr(0, colon));
    if (f.name.empty()) throw std::invalid_argument("family spec: empty name");
    if (colon != std::string_view::npos) {
      std::string rest(text.substr(colon + 1));
      std::stringstream ss(rest);
      std::string item;
      while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(item, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used == 0 || used != item.size())
          throw std::invalid_argument("family spec '" + std::string(text) +
                                      "': bad parameter '" + item + "'");
        f.params.push_back(v);
      }
    }
    return f;
  }

  double param(std::size_t i, double fallback) const {
    return i < params.size() ? params[i] : fallback;
  }

  void require_at_most(std::size_t n) const {
    if (params.size() > n)
      throw std::invalid_argument("family '" + name + "' takes at most " + std::to_string(n) +
                                  " parameters");
  }
};

struct DriftPiece {
  DriftMap beta;
  double lipschitz_sq = 0.0;  // |d beta|^2 <= L (|dy|^2 + |dz|^2 + ||d zeta||^2)
  bool lipschitz = true;
  bool uses_z = false;
  std::optional<DriftStructure> structure;
  std::optional<double> growth_K;
};

struct DiffusionPiece {
  DiffusionMap sigma;
  double lipschitz_sq = 0.0;  // per unit mass: |d sigma|^2 <= L |dy|^2
  double holder = 0.0;        // per unit mass: |d sigma|^2 <= H |dy|
  bool lipschitz = true;
};

struct JumpPiece {
  JumpMap g;
  double lipschitz = 0.0;  // |dg| <= L |dy| for every atom
};

using DriftFactory = std::function<DriftPiece(const FamilySpec&, const MarkSpaces&, std::size_t)>;
using DiffusionFactory = std::function<DiffusionPiece(const FamilySpec&, const MarkSpaces&)>;
using JumpFactory =
    std::function<JumpPiece(const FamilySpec&, const DiscreteMeasureSpace& space)>;

namespace detail {

inline double sum(Vec v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

inline double kernel_integral(Vec zeta, const DiscreteMeasureSpace& F) {
  double s = 0.0;
  for (std::size_t a = 0; a < F.size(); ++a) s += zeta[a] * F.weight(a);
  return s;
}

inline std::map<std::string, DriftFactory>& drift_registry() {
  static std::map<std::string, DriftFactory> reg = [] {
    std::map<std::string, DriftFactory> r;
    r["zero"] = [](const FamilySpec& f, const MarkSpaces&, std::size_t) {
      f.require_at_most(0);
      DriftPiece p;
      p.beta = zero_drift();
      p.structure = DriftStructure{[](double, double, Vec) { return 0.0; },
                                   [](double, std::size_t) { return 0.0; }, 0.0};
      p.growth_K = 0.0;
      return p;
    };
    r["constant"] = [](const FamilySpec& f, const MarkSpaces&, std::size_t) {
      f.require_at_most(1);
      const double c = f.param(0, 0.0);
      DriftPiece p;
      p.beta = [c](double, double, Vec, Vec) { return c; };
      p.structure = DriftStructure{[c](double, double, Vec) { return c; },
                                   [](double, std::size_t) { return 0.0; }, 0.0};
      p.growth_K = std::abs(c);
      return p;
    };
    // ay*y + az*sum(z) + c + kc * int zeta dnu
    r["linear"] = [](const FamilySpec& f, const MarkSpaces& sp, std::size_t n) {
      f.require_at_most(4);
      const double ay = f.param(0, 0.0), az = f.param(1, 0.0), c = f.param(2, 0.0),
                   kc = f.param(3, 0.0);
      const DiscreteMeasureSpace F = sp.F;
      DriftPiece p;
      auto h = [ay, az, c](double, double y, Vec z) { return ay * y + az * sum(z) + c; };
      p.beta = [h, kc, F](double s, double y, Vec z, Vec zeta) {
        return h(s, y, z) + kc * kernel_integral(zeta, F);
      };
      p.lipschitz_sq = ay * ay + az * az * static_cast<double>(n) + kc * kc * F.total_mass();
      p.uses_z = az != 0.0;
      const double K = std::max({std::abs(ay), std::abs(az) * std::sqrt(static_cast<double>(n)),
                                 kc * kc * F.total_mass(), std::abs(kc) * F.total_mass()});
      p.structure = DriftStructure{h, [kc](double, std::size_t) { return kc; }, K};
      p.growth_K = std::max(K, std::abs(c));
      return p;
    };
    // sin(y) + cos(z_0) + shift + kc * int zeta dnu
    r["trig"] = [](const FamilySpec& f, const MarkSpaces& sp, std::size_t) {
      f.require_at_most(2);
      const double shift = f.param(0, 0.0), kc = f.param(1, 0.0);
      const DiscreteMeasureSpace F = sp.F;
      DriftPiece p;
      auto h = [shift](double, double y, Vec z) { return std::sin(y) + std::cos(z[0]) + shift; };
      p.beta = [h, kc, F](double s, double y, Vec z, Vec zeta) {
        return h(s, y, z) + kc * kernel_integral(zeta, F);
      };
      p.lipschitz_sq = 2.0 + kc * kc * F.total_mass();
      p.uses_z = true;
      const double K =
          std::max({1.0, kc * kc * F.total_mass(), std::abs(kc) * F.total_mass()});
      p.structure = DriftStructure{h, [kc](double, std::size_t) { return kc; }, K};
      p.growth_K = std::max(K, 2.0 + std::abs(shift));
      return p;
    };
    // min(sqrt|y|, 1 + |y|) + shift; continuous, not Lipschitz at 0
    r["sqrt"] = [](const FamilySpec& f, const MarkSpaces&, std::size_t) {
      f.require_at_most(1);
      const double shift = f.param(0, 0.0);
      DriftPiece p;
      auto h = [shift](double, double y, Vec) {
        return std::min(std::sqrt(std::abs(y)), 1.0 + std::abs(y)) + shift;
      };
      p.beta = [h](double s, double y, Vec z, Vec) { return h(s, y, z); };
      p.lipschitz = false;
      p.structure = DriftStructure{h, [](double, std::size_t) { return 0.0; }, 1.0};
      p.growth_K = std::max(1.0, 1.0 + std::abs(shift));
      return p;
    };
    return r;
  }();
  return reg;
}

inline std::map<std::string, DiffusionFactory>& diffusion_registry() {
  static std::map<std::string, DiffusionFactory> reg = [] {
    std::map<std::string, DiffusionFactory> r;
    auto make = [](auto fn, double lip_sq, double holder, bool lipschitz) {
      DiffusionPiece p;
      p.sigma = [fn](double, double y, Vec, std::size_t, std::span<double> out) {
        const double v = fn(y);
        for (double& o : out) o = v;
      };
      p.lipschitz_sq = lip_sq;
      p.holder = holder;
      p.lipschitz = lipschitz;
      return p;
    };
    r["zero"] = [make](const FamilySpec& f, const MarkSpaces&) {
      f.require_at_most(0);
      return make([](double) { return 0.0; }, 0.0, 0.0, true);
    };
    r["constant"] = [make](const FamilySpec& f, const MarkSpaces&) {
      f.require_at_most(1);
      const double c = f.param(0, 0.0);
      return make([c](double) { return c; }, 0.0, 0.0, true);
    };
    r["linear"] = [make](const FamilySpec& f, const MarkSpaces&) {
      f.require_at_most(1);
      const double c = f.param(0, 1.0);
      return make([c](double y) { return c * y; }, c * c, 0.0, true);
    };
    r["trig"] = [make](const FamilySpec& f, const MarkSpaces&) {
      f.require_at_most(1);
      const double c = f.param(0, 1.0);
      return make([c](double y) { return c * std::sin(y); }, c * c, 0.0, true);
    };
    // c * sqrt(max(y, 0))
    r["sqrt"] = [make](const FamilySpec& f, const MarkSpaces&) {
      f.require_at_most(1);
      const double c = f.param(0, 1.0);
      return make([c](double y) { return c * std::sqrt(std::max(y, 0.0)); }, 0.0, c * c, false);
    };
    return r;
  }();
  return reg;
}

inline std::map<std::string, JumpFactory>& jump_registry() {
  static std::map<std::string, JumpFactory> reg = [] {
    std::map<std::string, JumpFactory> r;
    r["zero"] = [](const FamilySpec& f, const DiscreteMeasureSpace&) {
      f.require_at_most(0);
      return JumpPiece{zero_jump(), 0.0};
    };
    r["constant"] = [](const FamilySpec& f, const DiscreteMeasureSpace&) {
      f.require_at_most(1);
      const double c = f.param(0, 0.0);
      return JumpPiece{[c](double, double, Vec, std::size_t) { return c; }, 0.0};
    };
    r["linear"] = [](const FamilySpec& f, const DiscreteMeasureSpace&) {
      f.require_at_most(1);
      const double c = f.param(0, 1.0);
      return JumpPiece{[c](double, double y, Vec, std::size_t) { return c * y; }, std::abs(c)};
    };
    // -c * y * u with u the atom coordinate
    r["contraction"] = [](const FamilySpec& f, const DiscreteMeasureSpace& sp) {
      f.require_at_most(1);
      const double c = f.param(0, 1.0);
      std::vector<double> coords(sp.size());
      double umax = 0.0;
      for (std::size_t u = 0; u < sp.size(); ++u) {
        coords[u] = sp.coord(u);
        umax = std::max(umax, std::abs(coords[u]));
      }
      return JumpPiece{[c, coords](double, double y, Vec, std::size_t u) {
                         return -c * y * coords[u];
                       },
                       std::abs(c) * umax};
    };
    return r;
  }();
  return reg;
}

template <class Reg>
auto lookup(Reg& reg, const FamilySpec& f, const char* role) {
  auto it = reg.find(f.name);
  if (it == reg.end()) {
    std::string known;
    for (const auto& [k, v] : reg) known += (known.empty() ? "" : ", ") + k;
    throw std::invalid_argument(std::string("unknown ") + role + " family '" + f.name +
                                "' (known: " + known + ")");
  }
  return it->second;
}

}  // namespace detail

inline void register_drift_family(const std::string& name, DriftFactory f) {
  detail::drift_registry()[name] = std::move(f);
}
inline void register_diffusion_family(const std::string& name, DiffusionFactory f) {
  detail::diffusion_registry()[name] = std::move(f);
}
inline void register_jump_family(const std::string& name, JumpFactory f) {
  detail::jump_registry()[name] = std::move(f);
}

struct CoefficientRecipe {
  std::string drift = "zero";
  std::string sigma = "zero";
  std::string g0 = "zero";
  std::string g1 = "zero";
  // Width of the y-range on which Lipschitz jump maps are certified in
  // half-Hoelder form: |dg|^2 <= L^2 |dy|^2 <= L^2 * box * |dy|.
  double holder_box = 8.0;
};

inline CoefficientSet assemble_coefficients(const MarkSpaces& spaces, std::size_t n,
                                            const CoefficientRecipe& recipe) {
  const FamilySpec fd = FamilySpec::parse(recipe.drift), fs = FamilySpec::parse(recipe.sigma),
                   f0 = FamilySpec::parse(recipe.g0), f1 = FamilySpec::parse(recipe.g1);
  const DriftPiece d = detail::lookup(detail::drift_registry(), fd, "drift")(fd, spaces, n);
  const DiffusionPiece s = detail::lookup(detail::diffusion_registry(), fs, "sigma")(fs, spaces);
  const JumpPiece j0 = detail::lookup(detail::jump_registry(), f0, "g0")(f0, spaces.U0);
  const JumpPiece j1 = detail::lookup(detail::jump_registry(), f1, "g1")(f1, spaces.U1);

  CoefficientSet c;
  c.name = recipe.drift + " | " + recipe.sigma + " | " + recipe.g0 + " | " + recipe.g1;
  c.spaces = spaces;
  c.brownian_dim = n;
  c.beta = d.beta;
  c.sigma = s.sigma;
  c.g0 = j0.g;
  c.g1 = j1.g;
  c.drift_uses_z = d.uses_z;
  c.drift_structure = d.structure;
  c.growth_K = d.growth_K;

  const double mE = spaces.E.total_mass(), m0 = spaces.U0.total_mass(),
               m1 = spaces.U1.total_mass();
  const double noise_lip = s.lipschitz_sq * mE + j0.lipschitz * j0.lipschitz * m0 +
                           j1.lipschitz * j1.lipschitz * m1;
  c.lipschitz_C = std::max(d.lipschitz_sq, noise_lip);
  c.lipschitz_alpha = 0.0;
  c.condition21 = d.lipschitz && s.lipschitz;
  c.noise_lipschitz = s.lipschitz;
  c.noise_C = noise_lip;
  const double sigma_holder = (s.lipschitz ? s.lipschitz_sq * recipe.holder_box : s.holder) * mE;
  const double jump_holder =
      j0.lipschitz * j0.lipschitz * m0 * recipe.holder_box + j1.lipschitz * m1;
  c.holder_C = std::max(sigma_holder, jump_holder);
  if (!s.lipschitz) c.lipschitz_C = std::max(c.lipschitz_C, c.holder_C);
  return c;
}

// Terminal specs: constant:c | brownian | neg_abs | mcount
inline TerminalCondition make_terminal(std::string_view text) {
  const FamilySpec f = FamilySpec::parse(text);
  if (f.name == "constant") {
    f.require_at_most(1);
    return TerminalCondition::constant(f.param(0, 0.0));
  }
  if (f.name == "brownian") return terminal_brownian_identity();
  if (f.name == "neg_abs") return terminal_neg_abs_brownian();
  if (f.name == "mcount") return terminal_forward_jump_count();
  throw std::invalid_argument("unknown terminal kind '" + f.name +
                              "' (known: constant, brownian, neg_abs, mcount)");
}

}  // namespace bdsde
