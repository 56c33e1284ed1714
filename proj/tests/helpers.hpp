#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bdsde/drivers.hpp"
#include "bdsde/markspace.hpp"

namespace testing_helpers {

inline bdsde::DiscreteMeasureSpace single_atom(const std::string& label, double mass,
                                               double coord = 0.5) {
  return bdsde::discretize_measure({{bdsde::Atom{label, coord}, mass}});
}

inline bdsde::DiscreteMeasureSpace atoms(std::vector<double> coords, std::vector<double> masses) {
  std::vector<std::pair<bdsde::Atom, double>> list;
  for (std::size_t i = 0; i < coords.size(); ++i)
    list.push_back({bdsde::Atom{"a" + std::to_string(i), coords[i]}, masses[i]});
  return bdsde::discretize_measure(list);
}

// Weighted mean and variance over paths.
struct Moments {
  double mean = 0.0, var = 0.0;
};

inline Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

}  // namespace testing_helpers
