#pragma once

// Noise sources on a shared time grid.
//
// Forward drivers: Brownian motion B (dimension n) and the Poisson random
// measure M on F. Backward drivers: white noise W on E (n orthogonal
// components), Poisson measures N0 on U0 and N1 on U1.
//
// The backward drivers are stored as increments of the underlying forward
// processes. Forward slot j covers [T - t_{K-j}, T - t_{K-1-j}] and has
// length dt(K-1-j); the time-reversed increment over [t_k, t_{k+1}] is
// forward slot K-1-k.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bdsde/markspace.hpp"
#include "bdsde/parallel.hpp"
#include "bdsde/rng.hpp"

namespace bdsde {

class TimeGrid {
 public:
  TimeGrid() = default;

  explicit TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 2) throw std::invalid_argument("time grid: need at least two nodes");
    if (nodes_.front() != 0.0) throw std::invalid_argument("time grid: first node must be 0");
    for (std::size_t k = 0; k + 1 < nodes_.size(); ++k)
      if (!(nodes_[k + 1] > nodes_[k]))
        throw std::invalid_argument("time grid: nodes must be strictly increasing");
  }

  static TimeGrid uniform(double horizon, std::size_t steps) {
    if (!(horizon > 0.0)) throw std::invalid_argument("time grid: horizon must be > 0");
    if (steps < 1) throw std::invalid_argument("time grid: steps must be >= 1");
    std::vector<double> nodes(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k)
      nodes[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
    nodes[steps] = horizon;
    return TimeGrid(std::move(nodes));
  }

  double horizon() const { return nodes_.back(); }
  std::size_t steps() const { return nodes_.size() - 1; }
  double node(std::size_t k) const { return nodes_[k]; }
  double dt(std::size_t k) const { return nodes_[k + 1] - nodes_[k]; }
  const std::vector<double>& nodes() const { return nodes_; }

  bool operator==(const TimeGrid&) const = default;

 private:
  std::vector<double> nodes_{0.0, 1.0};
};

struct MarkSpaces {
  DiscreteMeasureSpace E;
  DiscreteMeasureSpace U0;
  DiscreteMeasureSpace U1;
  DiscreteMeasureSpace F;

  bool operator==(const MarkSpaces&) const = default;
};

// sampled: independent Monte Carlo paths.
// enumeration: the forward drivers are enumerated on a tree (B increments
// are +-sqrt(dt), M counts are Bernoulli(dt * nu(a))); each scenario
// carries one sample of the backward drivers shared by all its leaves.
enum class DriverMode { sampled, enumeration };

struct DriverOptions {
  std::size_t brownian_dim = 1;
  DriverMode mode = DriverMode::sampled;
  std::size_t max_tree_steps = 12;
  std::size_t max_tree_paths = std::size_t{1} << 22;
  std::size_t threads = 0;
};

class DriverPaths {
 public:
  const TimeGrid& grid() const { return grid_; }
  const MarkSpaces& spaces() const { return spaces_; }
  std::size_t steps() const { return grid_.steps(); }
  std::size_t n_paths() const { return n_paths_; }
  std::size_t brownian_dim() const { return n_; }
  std::uint64_t seed() const { return seed_; }
  DriverMode mode() const { return mode_; }

  // Number of sampled scenarios; equals n_paths() in sampled mode.
  std::size_t n_scenarios() const { return n_scenarios_; }
  // Leaves sharing one scenario; 1 in sampled mode.
  std::size_t leaves_per_scenario() const { return leaves_; }
  std::size_t branching() const { return branching_; }

  // Probability weight of each path (sums to 1).
  double path_weight(std::size_t p) const { return weight_[p]; }
  const std::vector<double>& path_weights() const { return weight_; }

  // Forward increments over [t_k, t_{k+1}].
  double dB(std::size_t k, std::size_t p, std::size_t i) const {
    return dB_[(k * n_paths_ + p) * n_ + i];
  }
  std::uint32_t M(std::size_t k, std::size_t p, std::size_t a) const {
    return M_[(k * n_paths_ + p) * spaces_.F.size() + a];
  }

  // Backward drivers in forward slot order (see file comment).
  double W(std::size_t j, std::size_t p, std::size_t e, std::size_t i) const {
    return W_[((j * n_paths_ + p) * spaces_.E.size() + e) * n_ + i];
  }
  std::uint32_t N0(std::size_t j, std::size_t p, std::size_t u) const {
    return N0_[(j * n_paths_ + p) * spaces_.U0.size() + u];
  }
  std::uint32_t N1(std::size_t j, std::size_t p, std::size_t u) const {
    return N1_[(j * n_paths_ + p) * spaces_.U1.size() + u];
  }

  std::size_t reversal(std::size_t k) const { return steps() - 1 - k; }

  // Length of forward slot j of the backward drivers.
  double backward_slot_length(std::size_t j) const { return grid_.dt(reversal(j)); }

  // Variance of the forward jump count on atom a during step k.
  double m_count_variance(std::size_t k, std::size_t a) const {
    const double rate = grid_.dt(k) * spaces_.F.weight(a);
    return mode_ == DriverMode::enumeration ? rate * (1.0 - rate) : rate;
  }

  // In enumeration mode, paths sharing all forward increments before step k
  // form a contiguous block of this size.
  std::size_t group_size(std::size_t k) const {
    std::size_t g = 1;
    for (std::size_t j = k; j < steps(); ++j) g *= branching_;
    return g;
  }

  bool operator==(const DriverPaths&) const = default;

 private:
  friend DriverPaths simulate_drivers(const TimeGrid&, const MarkSpaces&, std::size_t,
                                      std::uint64_t, const DriverOptions&);

  TimeGrid grid_;
  MarkSpaces spaces_;
  std::size_t n_paths_ = 0;
  std::size_t n_ = 1;
  std::uint64_t seed_ = 0;
  DriverMode mode_ = DriverMode::sampled;
  std::size_t n_scenarios_ = 0;
  std::size_t leaves_ = 1;
  std::size_t branching_ = 1;
  std::vector<double> weight_;
  std::vector<double> dB_;
  std::vector<double> W_;
  std::vector<std::uint32_t> N0_, N1_, M_;
};

namespace detail {

inline std::uint32_t channel(std::size_t atom, std::size_t component, std::size_t dim) {
  return static_cast<std::uint32_t>(atom * dim + component);
}

}  // namespace detail

inline DriverPaths simulate_drivers(const TimeGrid& grid, const MarkSpaces& spaces,
                                    std::size_t n_paths, std::uint64_t seed,
                                    const DriverOptions& options = {}) {
  if (n_paths < 1) throw std::invalid_argument("simulate_drivers: n_paths must be >= 1");
  if (options.brownian_dim < 1)
    throw std::invalid_argument("simulate_drivers: Brownian dimension must be >= 1");

  DriverPaths d;
  d.grid_ = grid;
  d.spaces_ = spaces;
  d.n_ = options.brownian_dim;
  d.seed_ = seed;
  d.mode_ = options.mode;

  const std::size_t K = grid.steps();
  const std::size_t n = d.n_;
  const std::size_t nE = spaces.E.size(), nU0 = spaces.U0.size(), nU1 = spaces.U1.size(),
                    nF = spaces.F.size();

  if (options.mode == DriverMode::enumeration) {
    if (K > options.max_tree_steps)
      throw std::invalid_argument("simulate_drivers: enumeration needs at most " +
                                  std::to_string(options.max_tree_steps) + " steps, got " +
                                  std::to_string(K));
    if (n + nF > 20) throw std::invalid_argument("simulate_drivers: enumeration branching too large");
    d.branching_ = std::size_t{1} << (n + nF);
    double leaves = 1.0;
    for (std::size_t k = 0; k < K; ++k) leaves *= static_cast<double>(d.branching_);
    if (leaves * static_cast<double>(n_paths) > static_cast<double>(options.max_tree_paths))
      throw std::invalid_argument("simulate_drivers: enumeration tree exceeds " +
                                  std::to_string(options.max_tree_paths) + " paths");
    d.leaves_ = static_cast<std::size_t>(leaves);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t a = 0; a < nF; ++a)
        if (grid.dt(k) * spaces.F.weight(a) > 1.0)
          throw std::invalid_argument(
              "simulate_drivers: enumeration needs dt * nu(atom) <= 1 for every atom of F");
  }
  d.n_scenarios_ = n_paths;
  d.n_paths_ = n_paths * d.leaves_;
  const std::size_t P = d.n_paths_;

  d.weight_.assign(P, 1.0 / static_cast<double>(P));
  d.dB_.assign(K * P * n, 0.0);
  d.W_.assign(K * P * nE * n, 0.0);
  d.N0_.assign(K * P * nU0, 0);
  d.N1_.assign(K * P * nU1, 0);
  d.M_.assign(K * P * nF, 0);

  // Backward drivers and, in sampled mode, forward drivers: one stream per
  // (path or scenario, slot, channel).
  parallel_for(
      n_paths,
      [&](std::size_t s) {
        const auto sp = static_cast<std::uint32_t>(s);
        for (std::size_t j = 0; j < K; ++j) {
          const auto sj = static_cast<std::uint32_t>(j);
          const double len = grid.dt(K - 1 - j);
          for (std::size_t e = 0; e < nE; ++e) {
            const double sd = std::sqrt(len * spaces.E.weight(e));
            for (std::size_t i = 0; i < n; ++i) {
              Stream st(seed, StreamFamily::white_noise, sp, sj, detail::channel(e, i, n));
              const double v = sd * st.normal();
              for (std::size_t l = 0; l < d.leaves_; ++l)
                d.W_[((j * P + s * d.leaves_ + l) * nE + e) * n + i] = v;
            }
          }
          for (std::size_t u = 0; u < nU0; ++u) {
            Stream st(seed, StreamFamily::poisson_n0, sp, sj, static_cast<std::uint32_t>(u));
            const std::uint32_t c = st.poisson(len * spaces.U0.weight(u));
            for (std::size_t l = 0; l < d.leaves_; ++l)
              d.N0_[(j * P + s * d.leaves_ + l) * nU0 + u] = c;
          }
          for (std::size_t u = 0; u < nU1; ++u) {
            Stream st(seed, StreamFamily::poisson_n1, sp, sj, static_cast<std::uint32_t>(u));
            const std::uint32_t c = st.poisson(len * spaces.U1.weight(u));
            for (std::size_t l = 0; l < d.leaves_; ++l)
              d.N1_[(j * P + s * d.leaves_ + l) * nU1 + u] = c;
          }
          if (options.mode == DriverMode::sampled) {
            const std::size_t k = j;
            const double sdB = std::sqrt(grid.dt(k));
            for (std::size_t i = 0; i < n; ++i) {
              Stream st(seed, StreamFamily::brownian, sp, sj, static_cast<std::uint32_t>(i));
              d.dB_[(k * P + s) * n + i] = sdB * st.normal();
            }
            for (std::size_t a = 0; a < nF; ++a) {
              Stream st(seed, StreamFamily::poisson_m, sp, sj, static_cast<std::uint32_t>(a));
              d.M_[(k * P + s) * nF + a] = st.poisson(grid.dt(k) * spaces.F.weight(a));
            }
          }
        }
      },
      options.threads);

  if (options.mode == DriverMode::enumeration) {
    // Leaf digits, most significant first: step k uses digit
    // (leaf / b^(K-1-k)) mod b; the low n bits pick the Brownian signs and
    // the remaining bits the jump indicators.
    const std::size_t b = d.branching_;
    const double scen_weight = 1.0 / static_cast<double>(n_paths);
    for (std::size_t leaf = 0; leaf < d.leaves_; ++leaf) {
      double w = scen_weight;
      std::size_t rest = leaf;
      std::vector<std::size_t> digits(K);
      for (std::size_t k = K; k-- > 0;) {
        digits[k] = rest % b;
        rest /= b;
      }
      for (std::size_t k = 0; k < K; ++k) {
        const double sdB = std::sqrt(grid.dt(k));
        for (std::size_t i = 0; i < n; ++i) {
          const bool up = (digits[k] >> i) & 1u;
          for (std::size_t s = 0; s < n_paths; ++s)
            d.dB_[(k * P + s * d.leaves_ + leaf) * n + i] = up ? sdB : -sdB;
          w *= 0.5;
        }
        for (std::size_t a = 0; a < nF; ++a) {
          const bool jump = (digits[k] >> (n + a)) & 1u;
          const double q = grid.dt(k) * spaces.F.weight(a);
          for (std::size_t s = 0; s < n_paths; ++s)
            d.M_[(k * P + s * d.leaves_ + leaf) * nF + a] = jump ? 1u : 0u;
          w *= jump ? q : 1.0 - q;
        }
      }
      for (std::size_t s = 0; s < n_paths; ++s) d.weight_[s * d.leaves_ + leaf] = w;
    }
  }
  return d;
}

// Read-only view of the drivers in either time direction. In the reversed
// view the backward drivers are indexed by original-time slot; the forward
// drivers pass through unchanged.
class NoiseView {
 public:
  explicit NoiseView(const DriverPaths& d, bool reversed = false) : d_(&d), reversed_(reversed) {}

  bool is_reversed() const { return reversed_; }
  const DriverPaths& drivers() const { return *d_; }

  double dB(std::size_t k, std::size_t p, std::size_t i) const { return d_->dB(k, p, i); }
  std::uint32_t M(std::size_t k, std::size_t p, std::size_t a) const { return d_->M(k, p, a); }
  double W(std::size_t k, std::size_t p, std::size_t e, std::size_t i) const {
    return d_->W(slot(k), p, e, i);
  }
  std::uint32_t N0(std::size_t k, std::size_t p, std::size_t u) const {
    return d_->N0(slot(k), p, u);
  }
  std::uint32_t N1(std::size_t k, std::size_t p, std::size_t u) const {
    return d_->N1(slot(k), p, u);
  }
  double slot_length(std::size_t k) const { return d_->backward_slot_length(slot(k)); }

  bool operator==(const NoiseView& o) const { return d_ == o.d_ && reversed_ == o.reversed_; }

 private:
  std::size_t slot(std::size_t k) const { return reversed_ ? d_->reversal(k) : k; }

  const DriverPaths* d_;
  bool reversed_;
};

inline NoiseView reverse_view(const DriverPaths& d) { return NoiseView(d, true); }
inline NoiseView reverse_view(const NoiseView& v) { return NoiseView(v.drivers(), !v.is_reversed()); }

// One row per (k, p). Backward-driver columns hold the time-reversed
// increments over [t_k, t_{k+1}].
inline void write_drivers_csv(std::ostream& os, const DriverPaths& d) {
  const auto& sp = d.spaces();
  const std::size_t n = d.brownian_dim();
  os << "k,p,t,dt,weight";
  for (std::size_t i = 0; i < n; ++i) os << ",dB" << i;
  for (std::size_t e = 0; e < sp.E.size(); ++e)
    for (std::size_t i = 0; i < n; ++i) os << ",dWrev_" << sp.E.atom(e).label << "_" << i;
  for (std::size_t u = 0; u < sp.U0.size(); ++u) os << ",N0rev_" << sp.U0.atom(u).label;
  for (std::size_t u = 0; u < sp.U1.size(); ++u) os << ",N1rev_" << sp.U1.atom(u).label;
  for (std::size_t a = 0; a < sp.F.size(); ++a) os << ",M_" << sp.F.atom(a).label;
  os << '\n';
  const NoiseView rv = reverse_view(d);
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  for (std::size_t k = 0; k < d.steps(); ++k) {
    for (std::size_t p = 0; p < d.n_paths(); ++p) {
      os << k << ',' << p << ',' << num(d.grid().node(k)) << ',' << num(d.grid().dt(k)) << ','
         << num(d.path_weight(p));
      for (std::size_t i = 0; i < n; ++i) os << ',' << num(d.dB(k, p, i));
      for (std::size_t e = 0; e < sp.E.size(); ++e)
        for (std::size_t i = 0; i < n; ++i) os << ',' << num(rv.W(k, p, e, i));
      for (std::size_t u = 0; u < sp.U0.size(); ++u) os << ',' << rv.N0(k, p, u);
      for (std::size_t u = 0; u < sp.U1.size(); ++u) os << ',' << rv.N1(k, p, u);
      for (std::size_t a = 0; a < sp.F.size(); ++a) os << ',' << d.M(k, p, a);
      os << '\n';
    }
  }
}

}  // namespace bdsde
