#pragma once

// Conditional expectation given the information available at node k:
// forward drivers up to t_k and backward drivers on [t_k, T].
//
// lsmc: weighted ridge least squares on all monomials of bounded degree in
// standardized node features.
// exact_tree: averages over the block of paths sharing the forward history
// (requires enumeration drivers).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "bdsde/drivers.hpp"
#include "bdsde/parallel.hpp"

namespace bdsde {

enum class RegressionMode { lsmc, exact_tree };

inline const char* to_string(RegressionMode m) {
  return m == RegressionMode::lsmc ? "lsmc" : "exact_tree";
}

struct FeatureSet {
  bool brownian = true;          // B_{t_k}
  bool forward_jumps = true;     // compensated M count on [0, t_k]
  bool white_noise = true;       // reversed W on [t_k, T], per component
  bool jumps_n0 = true;          // reversed compensated N0 count on [t_k, T]
  bool jumps_n1 = true;          // reversed raw N1 count on [t_k, T]

  bool operator==(const FeatureSet&) const = default;
};

struct RegressionSpec {
  RegressionMode mode = RegressionMode::lsmc;
  std::size_t basis_degree = 2;
  double ridge = 1e-8;
  FeatureSet features;

  bool operator==(const RegressionSpec&) const = default;
};

class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConditionalExpectation {
 public:
  ConditionalExpectation(const DriverPaths& d, RegressionSpec spec)
      : d_(&d), spec_(spec), P_(d.n_paths()), K_(d.steps()) {
    if (spec_.basis_degree < 1)
      throw std::invalid_argument("regression: basis_degree must be >= 1");
    if (!(spec_.ridge >= 0.0)) throw std::invalid_argument("regression: ridge must be >= 0");
    if (spec_.mode == RegressionMode::exact_tree) {
      if (d.mode() != DriverMode::enumeration)
        throw std::invalid_argument(
            "regression: exact_tree mode requires drivers generated in enumeration mode");
      return;
    }
    build_lsmc();
  }

  const RegressionSpec& spec() const { return spec_; }
  const DriverPaths& drivers() const { return *d_; }

  // out[p] = E[target | node-k information](p)
  void project(std::size_t k, const double* target, double* out) const {
    if (spec_.mode == RegressionMode::exact_tree) {
      project_tree(k, target, out);
    } else {
      project_lsmc(k, target, out);
    }
  }

  std::vector<double> project(std::size_t k, const std::vector<double>& target) const {
    std::vector<double> out(P_);
    project(k, target.data(), out.data());
    return out;
  }

  // Number of basis functions at node k (1 in exact_tree mode).
  std::size_t basis_size(std::size_t k) const {
    return spec_.mode == RegressionMode::exact_tree ? 1 : nodes_[k].exponents.size();
  }

 private:
  struct Node {
    std::size_t nf = 0;
    std::vector<double> feat;  // P x nf, standardized
    std::vector<std::vector<int>> exponents;
    Eigen::LDLT<Eigen::MatrixXd> ldlt;
  };

  void project_tree(std::size_t k, const double* y, double* out) const {
    const std::size_t g = d_->group_size(k);
    const auto& w = d_->path_weights();
    for (std::size_t start = 0; start < P_; start += g) {
      double sw = 0.0, sy = 0.0;
      for (std::size_t p = start; p < start + g; ++p) {
        sw += w[p];
        sy += w[p] * y[p];
      }
      const double m = sy / sw;
      for (std::size_t p = start; p < start + g; ++p) out[p] = m;
    }
  }

  static void basis_row(const Node& nd, const double* f, double* row) {
    for (std::size_t j = 0; j < nd.exponents.size(); ++j) {
      double v = 1.0;
      for (std::size_t i = 0; i < nd.nf; ++i)
        for (int e = 0; e < nd.exponents[j][i]; ++e) v *= f[i];
      row[j] = v;
    }
  }

  void project_lsmc(std::size_t k, const double* y, double* out) const {
    const Node& nd = nodes_[k];
    const std::size_t m = nd.exponents.size();
    const auto& w = d_->path_weights();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    std::vector<double> row(m);
    for (std::size_t p = 0; p < P_; ++p) {
      basis_row(nd, &nd.feat[p * nd.nf], row.data());
      for (std::size_t j = 0; j < m; ++j) rhs[static_cast<Eigen::Index>(j)] += w[p] * y[p] * row[j];
    }
    const Eigen::VectorXd coef = nd.ldlt.solve(rhs);
    parallel_for(P_, [&](std::size_t p) {
      std::vector<double> r(m);
      basis_row(nd, &nd.feat[p * nd.nf], r.data());
      double v = 0.0;
      for (std::size_t j = 0; j < m; ++j) v += coef[static_cast<Eigen::Index>(j)] * r[j];
      out[p] = v;
    });
  }

  static void exponents_upto(std::size_t nf, std::size_t degree, std::vector<int>& cur,
                             std::size_t pos, std::size_t left,
                             std::vector<std::vector<int>>& out) {
    if (pos == nf) {
      out.push_back(cur);
      return;
    }
    for (std::size_t e = 0; e <= left; ++e) {
      cur[pos] = static_cast<int>(e);
      exponents_upto(nf, degree, cur, pos + 1, left - e, out);
    }
    cur[pos] = 0;
  }

  void build_lsmc() {
    const DriverPaths& d = *d_;
    const auto& sp = d.spaces();
    const std::size_t n = d.brownian_dim();
    const FeatureSet& fs = spec_.features;
    const NoiseView rv = reverse_view(d);
    const auto& w = d.path_weights();

    std::size_t nraw = 0;
    if (fs.brownian) nraw += n;
    if (fs.forward_jumps && !sp.F.empty()) nraw += 1;
    if (fs.white_noise && !sp.E.empty()) nraw += n;
    if (fs.jumps_n0 && !sp.U0.empty()) nraw += 1;
    if (fs.jumps_n1 && !sp.U1.empty()) nraw += 1;

    // Raw features for all nodes, built by running sums.
    std::vector<double> raw((K_ + 1) * P_ * nraw, 0.0);
    parallel_for(P_, [&](std::size_t p) {
      std::vector<double> fwd(n + 1, 0.0), bwd(n + 2, 0.0);
      // forward sums, ascending
      for (std::size_t k = 0; k <= K_; ++k) {
        if (k > 0) {
          for (std::size_t i = 0; i < n; ++i) fwd[i] += d.dB(k - 1, p, i);
          for (std::size_t a = 0; a < sp.F.size(); ++a)
            fwd[n] += d.M(k - 1, p, a) - d.grid().dt(k - 1) * sp.F.weight(a);
        }
        std::size_t c = 0;
        double* f = &raw[(k * P_ + p) * nraw];
        if (fs.brownian)
          for (std::size_t i = 0; i < n; ++i) f[c++] = fwd[i];
        if (fs.forward_jumps && !sp.F.empty()) f[c++] = fwd[n];
      }
      // backward sums, descending
      for (std::size_t k = K_ + 1; k-- > 0;) {
        if (k < K_) {
          const double dt = d.grid().dt(k);
          for (std::size_t e = 0; e < sp.E.size(); ++e)
            for (std::size_t i = 0; i < n; ++i) bwd[i] += rv.W(k, p, e, i);
          for (std::size_t u = 0; u < sp.U0.size(); ++u)
            bwd[n] += rv.N0(k, p, u) - dt * sp.U0.weight(u);
          for (std::size_t u = 0; u < sp.U1.size(); ++u) bwd[n + 1] += rv.N1(k, p, u);
        }
        std::size_t c = (fs.brownian ? n : 0) + (fs.forward_jumps && !sp.F.empty() ? 1 : 0);
        double* f = &raw[(k * P_ + p) * nraw];
        if (fs.white_noise && !sp.E.empty())
          for (std::size_t i = 0; i < n; ++i) f[c++] = bwd[i];
        if (fs.jumps_n0 && !sp.U0.empty()) f[c++] = bwd[n];
        if (fs.jumps_n1 && !sp.U1.empty()) f[c++] = bwd[n + 1];
      }
    });

    nodes_.resize(K_ + 1);
    for (std::size_t k = 0; k <= K_; ++k) {
      Node& nd = nodes_[k];
      // weighted standardization; drop constant features
      std::vector<double> mean(nraw, 0.0), sd(nraw, 0.0);
      for (std::size_t p = 0; p < P_; ++p)
        for (std::size_t i = 0; i < nraw; ++i) mean[i] += w[p] * raw[(k * P_ + p) * nraw + i];
      for (std::size_t p = 0; p < P_; ++p)
        for (std::size_t i = 0; i < nraw; ++i) {
          const double c = raw[(k * P_ + p) * nraw + i] - mean[i];
          sd[i] += w[p] * c * c;
        }
      std::vector<std::size_t> keep;
      for (std::size_t i = 0; i < nraw; ++i) {
        sd[i] = std::sqrt(sd[i]);
        if (sd[i] > 1e-12 * (1.0 + std::abs(mean[i]))) keep.push_back(i);
      }
      nd.nf = keep.size();
      nd.feat.assign(P_ * nd.nf, 0.0);
      for (std::size_t p = 0; p < P_; ++p)
        for (std::size_t j = 0; j < nd.nf; ++j) {
          const std::size_t i = keep[j];
          nd.feat[p * nd.nf + j] = (raw[(k * P_ + p) * nraw + i] - mean[i]) / sd[i];
        }
      std::vector<int> cur(nd.nf, 0);
      exponents_upto(nd.nf, spec_.basis_degree, cur, 0, spec_.basis_degree, nd.exponents);

      const std::size_t m = nd.exponents.size();
      const auto mi = static_cast<Eigen::Index>(m);
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(mi, mi);
      std::vector<double> row(m);
      for (std::size_t p = 0; p < P_; ++p) {
        basis_row(nd, &nd.feat[p * nd.nf], row.data());
        const Eigen::Map<const Eigen::VectorXd> r(row.data(), mi);
        A.selfadjointView<Eigen::Lower>().rankUpdate(r, w[p]);
      }
      A = A.selfadjointView<Eigen::Lower>();
      // exponents[0] is the all-zero multi-index (intercept); it is not penalized
      for (Eigen::Index j = 1; j < mi; ++j) A(j, j) += spec_.ridge;
      nd.ldlt.compute(A);
      const Eigen::VectorXd D = nd.ldlt.vectorD();
      const double dmax = D.cwiseAbs().maxCoeff();
      if (nd.ldlt.info() != Eigen::Success || !std::isfinite(dmax) ||
          D.minCoeff() <= 1e-14 * dmax)
        throw numerical_error("regression: singular normal equations at node " +
                              std::to_string(k) +
                              "; increase the ridge or use exact_tree mode");
    }
  }

  const DriverPaths* d_;
  RegressionSpec spec_;
  std::size_t P_, K_;
  std::vector<Node> nodes_;
};

}  // namespace bdsde
