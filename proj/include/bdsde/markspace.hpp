#pragma once

// Finite-atom discretizations of the mark-space measures pi, mu0, mu1, nu.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bdsde {

struct Atom {
  std::string label;
  std::optional<double> coord;

  bool operator==(const Atom&) const = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
  bool operator==(const Interval&) const = default;
};

struct TruncationRecord {
  std::size_t level = 0;
  Interval window;
};

class DiscreteMeasureSpace {
 public:
  DiscreteMeasureSpace() = default;

  DiscreteMeasureSpace(std::vector<Atom> atoms, std::vector<double> weights)
      : atoms_(std::move(atoms)), weights_(std::move(weights)) {
    if (atoms_.size() != weights_.size())
      throw std::invalid_argument("measure space: atom and weight counts differ");
    std::set<std::string> labels;
    std::set<double> coords;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (!std::isfinite(weights_[i]) || weights_[i] < 0.0)
        throw std::invalid_argument("measure space: weight of atom '" + atoms_[i].label +
                                    "' is negative or not finite");
      if (!labels.insert(atoms_[i].label).second)
        throw std::invalid_argument("measure space: duplicate atom '" + atoms_[i].label + "'");
      if (atoms_[i].coord && !coords.insert(*atoms_[i].coord).second)
        throw std::invalid_argument("measure space: duplicate atom coordinate");
    }
    total_mass_ = 0.0;
    for (double w : weights_) total_mass_ += w;
  }

  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }
  const Atom& atom(std::size_t i) const { return atoms_.at(i); }
  const std::vector<Atom>& atoms() const { return atoms_; }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& weights() const { return weights_; }
  double total_mass() const { return total_mass_; }

  double coord(std::size_t i) const {
    return atoms_[i].coord ? *atoms_[i].coord : static_cast<double>(i);
  }

  const std::optional<TruncationRecord>& truncation() const { return truncation_; }
  bool empty_truncation_warning() const { return empty_warning_; }

  bool operator==(const DiscreteMeasureSpace& o) const {
    return atoms_ == o.atoms_ && weights_ == o.weights_;
  }

  void set_truncation(TruncationRecord rec, bool empty_warning) {
    truncation_ = rec;
    empty_warning_ = empty_warning;
  }

 private:
  std::vector<Atom> atoms_;
  std::vector<double> weights_;
  double total_mass_ = 0.0;
  std::optional<TruncationRecord> truncation_;
  bool empty_warning_ = false;
};

// A density on the real line. When an antiderivative is known, cell
// masses are exact; otherwise the midpoint rule is used.
struct Density {
  std::string name;
  std::function<double(double)> pdf;
  std::function<double(double)> antiderivative;
};

inline Density uniform_density(double c = 1.0) {
  return {"uniform", [c](double) { return c; }, [c](double x) { return c * x; }};
}

// c * x^p
inline Density power_density(double c, double p) {
  Density d;
  d.name = "power";
  d.pdf = [c, p](double x) { return c * std::pow(x, p); };
  if (p == -1.0) {
    d.antiderivative = [c](double x) {
      return x > 0.0 ? c * std::log(x) : -std::numeric_limits<double>::infinity();
    };
  } else {
    d.antiderivative = [c, p](double x) {
      if (x == 0.0 && p < -1.0) return -std::numeric_limits<double>::infinity();
      return c * std::pow(x, p + 1.0) / (p + 1.0);
    };
  }
  return d;
}

namespace detail {

inline double cell_mass(const Density& d, double a, double b) {
  if (d.antiderivative) return d.antiderivative(b) - d.antiderivative(a);
  return d.pdf(0.5 * (a + b)) * (b - a);
}

inline std::string format_interval(Interval s) {
  return "[" + std::to_string(s.lo) + ", " + std::to_string(s.hi) + "]";
}

}  // namespace detail

// Atoms at cell midpoints of a uniform partition of the support; weights
// are the cell-integrated masses.
inline DiscreteMeasureSpace discretize_measure(const Density& density, Interval support,
                                               std::size_t n_atoms) {
  if (n_atoms < 1) throw std::invalid_argument("discretize_measure: n_atoms must be >= 1");
  if (!(support.hi > support.lo))
    throw std::invalid_argument("discretize_measure: empty support " +
                                detail::format_interval(support));
  if (!density.pdf) throw std::invalid_argument("discretize_measure: density has no pdf");

  if (density.antiderivative) {
    const double total =
        density.antiderivative(support.hi) - density.antiderivative(support.lo);
    if (!std::isfinite(total))
      throw std::domain_error("discretize_measure: density '" + density.name +
                              "' is not integrable on " + detail::format_interval(support));
  }

  const double h = support.length() / static_cast<double>(n_atoms);
  std::vector<Atom> atoms;
  std::vector<double> weights;
  atoms.reserve(n_atoms);
  weights.reserve(n_atoms);
  for (std::size_t i = 0; i < n_atoms; ++i) {
    const double a = support.lo + h * static_cast<double>(i);
    const double b = (i + 1 == n_atoms) ? support.hi : a + h;
    const double mid = support.lo + h * (static_cast<double>(i) + 0.5);
    const double w = detail::cell_mass(density, a, b);
    if (!std::isfinite(w) || w < 0.0)
      throw std::domain_error("discretize_measure: density '" + density.name +
                              "' gives invalid mass on cell " +
                              detail::format_interval({a, b}));
    atoms.push_back({"x" + std::to_string(i), mid});
    weights.push_back(w);
  }
  return DiscreteMeasureSpace(std::move(atoms), std::move(weights));
}

// Explicit labelled atoms with user-supplied masses.
inline DiscreteMeasureSpace discretize_measure(
    const std::vector<std::pair<Atom, double>>& atom_list) {
  if (atom_list.empty())
    throw std::invalid_argument("discretize_measure: empty atom list");
  std::vector<Atom> atoms;
  std::vector<double> weights;
  for (const auto& [a, w] : atom_list) {
    atoms.push_back(a);
    weights.push_back(w);
  }
  return DiscreteMeasureSpace(std::move(atoms), std::move(weights));
}

// Increasing exhaustion of a support.
struct Exhaustion {
  std::string name;
  std::function<Interval(std::size_t)> window;
};

// F_n = [1/n, n]
inline Exhaustion reciprocal_exhaustion() {
  return {"reciprocal", [](std::size_t n) {
            const double v = static_cast<double>(n);
            return Interval{1.0 / v, v};
          }};
}

struct SigmaFiniteSpec {
  Density density;
  Interval support;  // may have infinite endpoints
  std::size_t n_atoms = 16;
  Exhaustion exhaustion = reciprocal_exhaustion();
};

inline DiscreteMeasureSpace truncate_measure(const SigmaFiniteSpec& spec, std::size_t level) {
  if (level < 1) throw std::invalid_argument("truncate_measure: level must be >= 1");
  if (!spec.exhaustion.window)
    throw std::invalid_argument("truncate_measure: no exhaustion family declared");
  const Interval w = spec.exhaustion.window(level);
  const Interval cut{std::max(w.lo, spec.support.lo), std::min(w.hi, spec.support.hi)};
  if (!(cut.hi > cut.lo)) {
    DiscreteMeasureSpace empty;
    empty.set_truncation({level, cut}, true);
    return empty;
  }
  DiscreteMeasureSpace out = discretize_measure(spec.density, cut, spec.n_atoms);
  out.set_truncation({level, cut}, false);
  return out;
}

}  // namespace bdsde
