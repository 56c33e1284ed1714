#pragma once

// Experiment configuration: flat `key = value` text, one entry per line,
// `#` starts a comment. serialize() writes every key in a fixed order, so
// parse(serialize(c)) == c and the FNV-1a hash of the canonical text
// identifies an experiment.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bdsde/coefficients.hpp"
#include "bdsde/drivers.hpp"
#include "bdsde/families.hpp"
#include "bdsde/markspace.hpp"
#include "bdsde/regression.hpp"

namespace bdsde {

class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  // grid and drivers
  double T = 1.0;
  std::size_t K = 10;
  std::string E = "none", U0 = "none", U1 = "none", F = "none";
  std::size_t brownian_dim = 1;
  std::size_t paths = 1000;
  std::uint64_t seed = 1;
  RegressionMode mode = RegressionMode::lsmc;
  std::size_t basis_degree = 2;
  double ridge = 1e-8;

  // first coefficient set and terminal
  std::string drift = "zero", sigma = "zero", g0 = "zero", g1 = "zero";
  double holder_box = 8.0;
  std::string terminal = "constant:0";
  // second set of a comparison pair; empty entries copy the first set
  std::string drift2, sigma2, g02, g12, terminal2;

  // solver
  double tol = 1e-6;
  std::size_t max_iter = 60;
  double initial = 0.0;
  bool force = false;

  // comparison
  std::string hypothesis = "thm41a";
  std::optional<double> delta;  // unset: calibrate
  double ceiling = 0.01;
  std::size_t cloud = 3000;

  // envelope
  std::vector<double> levels{2.0, 4.0, 8.0};

  // ito-check
  std::string test_function = "square";

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out))
    throw config_error("config: key '" + key + "' needs a finite number, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw config_error("config: key '" + key + "' needs a nonnegative integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error("config: key '" + key + "' needs true or false, got '" + v + "'");
}

// shortest text that parses back to the same double
inline std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  return out;
}

}  // namespace detail

inline RegressionMode parse_mode(std::string_view s) {
  if (s == "lsmc") return RegressionMode::lsmc;
  if (s == "exact_tree") return RegressionMode::exact_tree;
  throw config_error("unknown mode '" + std::string(s) + "' (known: lsmc, exact_tree)");
}

// Applies one `key = value` assignment.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "T") c.T = parse_double(key, v);
  else if (key == "K") c.K = parse_uint(key, v);
  else if (key == "E") c.E = v;
  else if (key == "U0") c.U0 = v;
  else if (key == "U1") c.U1 = v;
  else if (key == "F") c.F = v;
  else if (key == "brownian_dim") c.brownian_dim = parse_uint(key, v);
  else if (key == "paths") c.paths = parse_uint(key, v);
  else if (key == "seed") c.seed = parse_uint(key, v);
  else if (key == "mode") c.mode = parse_mode(v);
  else if (key == "basis_degree") c.basis_degree = parse_uint(key, v);
  else if (key == "ridge") c.ridge = parse_double(key, v);
  else if (key == "drift") c.drift = v;
  else if (key == "sigma") c.sigma = v;
  else if (key == "g0") c.g0 = v;
  else if (key == "g1") c.g1 = v;
  else if (key == "holder_box") c.holder_box = parse_double(key, v);
  else if (key == "terminal") c.terminal = v;
  else if (key == "drift2") c.drift2 = v;
  else if (key == "sigma2") c.sigma2 = v;
  else if (key == "g02") c.g02 = v;
  else if (key == "g12") c.g12 = v;
  else if (key == "terminal2") c.terminal2 = v;
  else if (key == "tol") c.tol = parse_double(key, v);
  else if (key == "max_iter") c.max_iter = parse_uint(key, v);
  else if (key == "initial") c.initial = parse_double(key, v);
  else if (key == "force") c.force = parse_bool(key, v);
  else if (key == "hypothesis") c.hypothesis = v;
  else if (key == "delta") c.delta = v == "auto" ? std::nullopt : std::optional(parse_double(key, v));
  else if (key == "ceiling") c.ceiling = parse_double(key, v);
  else if (key == "cloud") c.cloud = parse_uint(key, v);
  else if (key == "levels") c.levels = parse_list(key, v);
  else if (key == "test_function") c.test_function = v;
  else throw config_error("config: unknown key '" + key + "'");
}

inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::map<std::string, std::size_t> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const std::string s = detail::trim(line);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(s).substr(0, eq));
    const std::string value = detail::trim(std::string_view(s).substr(eq + 1));
    if (const auto it = seen.find(key); it != seen.end())
      throw config_error("config line " + std::to_string(lineno) + ": key '" + key +
                         "' already set on line " + std::to_string(it->second));
    seen[key] = lineno;
    try {
      set_config_value(c, key, value);
    } catch (const config_error& e) {
      throw config_error("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw config_error("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

inline std::string serialize(const ExperimentConfig& c) {
  using detail::fmt;
  std::string levels;
  for (std::size_t i = 0; i < c.levels.size(); ++i) levels += (i ? "," : "") + fmt(c.levels[i]);
  const std::vector<std::pair<const char*, std::string>> kv{
      {"T", fmt(c.T)},
      {"K", std::to_string(c.K)},
      {"E", c.E},
      {"U0", c.U0},
      {"U1", c.U1},
      {"F", c.F},
      {"brownian_dim", std::to_string(c.brownian_dim)},
      {"paths", std::to_string(c.paths)},
      {"seed", std::to_string(c.seed)},
      {"mode", to_string(c.mode)},
      {"basis_degree", std::to_string(c.basis_degree)},
      {"ridge", fmt(c.ridge)},
      {"drift", c.drift},
      {"sigma", c.sigma},
      {"g0", c.g0},
      {"g1", c.g1},
      {"holder_box", fmt(c.holder_box)},
      {"terminal", c.terminal},
      {"drift2", c.drift2},
      {"sigma2", c.sigma2},
      {"g02", c.g02},
      {"g12", c.g12},
      {"terminal2", c.terminal2},
      {"tol", fmt(c.tol)},
      {"max_iter", std::to_string(c.max_iter)},
      {"initial", fmt(c.initial)},
      {"force", c.force ? "true" : "false"},
      {"hypothesis", c.hypothesis},
      {"delta", c.delta ? fmt(*c.delta) : "auto"},
      {"ceiling", fmt(c.ceiling)},
      {"cloud", std::to_string(c.cloud)},
      {"levels", levels},
      {"test_function", c.test_function},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += std::string(k) + " = " + v + "\n";
  return out;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(serialize(c))));
  return buf;
}

// Measure specs:
//   none
//   atoms:c@m,c@m,...            explicit atoms (coordinate @ mass)
//   uniform:lo,hi,n[,density]    constant density on [lo, hi], n cells
//   power:c,p,lo,hi,n            density c x^p on [lo, hi], n cells
//   sigma:c,p,n,level            density c x^p on (0, inf) cut to [1/level, level]
inline DiscreteMeasureSpace parse_measure(std::string_view text) {
  const std::string s(text);
  if (s == "none" || s.empty()) return {};
  const auto colon = s.find(':');
  const std::string name = s.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : s.substr(colon + 1);
  if (name == "atoms") {
    std::vector<std::pair<Atom, double>> list;
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto at = item.find('@');
      if (at == std::string::npos) throw config_error("measure '" + s + "': atom needs coord@mass");
      const double coord = detail::parse_double("atoms", detail::trim(item.substr(0, at)));
      const double mass = detail::parse_double("atoms", detail::trim(item.substr(at + 1)));
      list.push_back({Atom{"a" + std::to_string(list.size()), coord}, mass});
    }
    return discretize_measure(list);
  }
  const std::vector<double> p = detail::parse_list(name, rest);
  auto count = [&](double v) {
    if (!(v >= 1.0) || v != std::floor(v)) throw config_error("measure '" + s + "': bad atom count");
    return static_cast<std::size_t>(v);
  };
  if (name == "uniform" && (p.size() == 3 || p.size() == 4))
    return discretize_measure(uniform_density(p.size() == 4 ? p[3] : 1.0), {p[0], p[1]}, count(p[2]));
  if (name == "power" && p.size() == 5)
    return discretize_measure(power_density(p[0], p[1]), {p[2], p[3]}, count(p[4]));
  if (name == "sigma" && p.size() == 4) {
    SigmaFiniteSpec spec{power_density(p[0], p[1]),
                         {0.0, std::numeric_limits<double>::infinity()},
                         count(p[2]),
                         reciprocal_exhaustion()};
    return truncate_measure(spec, count(p[3]));
  }
  throw config_error("unknown measure spec '" + s +
                     "' (known: none, atoms:, uniform:, power:, sigma:)");
}

// Runtime objects described by a config.
struct Experiment {
  ExperimentConfig config;
  TimeGrid grid;
  MarkSpaces spaces;
  DriverOptions driver_options;
  RegressionSpec regression;
  CoefficientRecipe recipe1, recipe2;
  TerminalCondition terminal1, terminal2;

  CoefficientSet coefficients1() const {
    return assemble_coefficients(spaces, config.brownian_dim, recipe1);
  }
  CoefficientSet coefficients2() const {
    return assemble_coefficients(spaces, config.brownian_dim, recipe2);
  }
  DriverPaths drivers() const {
    return simulate_drivers(grid, spaces, config.paths, config.seed, driver_options);
  }
};

inline Experiment build_experiment(const ExperimentConfig& c) {
  Experiment x;
  x.config = c;
  if (!(c.T > 0.0)) throw config_error("config: T must be positive");
  if (c.K < 1) throw config_error("config: K must be >= 1");
  if (c.paths < 1) throw config_error("config: paths must be >= 1");
  if (c.brownian_dim < 1) throw config_error("config: brownian_dim must be >= 1");
  if (!(c.tol > 0.0)) throw config_error("config: tol must be positive");
  if (c.max_iter < 1) throw config_error("config: max_iter must be >= 1");
  if (c.levels.empty()) throw config_error("config: levels must not be empty");
  if (c.test_function != "square" && c.test_function != "linear")
    throw config_error("config: test_function must be square or linear");
  parse_hypothesis(c.hypothesis);
  x.grid = TimeGrid::uniform(c.T, c.K);
  x.spaces.E = parse_measure(c.E);
  x.spaces.U0 = parse_measure(c.U0);
  x.spaces.U1 = parse_measure(c.U1);
  x.spaces.F = parse_measure(c.F);
  x.driver_options.brownian_dim = c.brownian_dim;
  x.driver_options.mode =
      c.mode == RegressionMode::exact_tree ? DriverMode::enumeration : DriverMode::sampled;
  x.regression.mode = c.mode;
  x.regression.basis_degree = c.basis_degree;
  x.regression.ridge = c.ridge;
  x.recipe1 = {c.drift, c.sigma, c.g0, c.g1, c.holder_box};
  auto or_first = [](const std::string& a, const std::string& b) { return a.empty() ? b : a; };
  x.recipe2 = {or_first(c.drift2, c.drift), or_first(c.sigma2, c.sigma), or_first(c.g02, c.g0),
               or_first(c.g12, c.g1), c.holder_box};
  x.terminal1 = make_terminal(c.terminal);
  x.terminal2 = make_terminal(or_first(c.terminal2, c.terminal));
  // resolve every family name now
  x.coefficients1();
  x.coefficients2();
  return x;
}

}  // namespace bdsde
