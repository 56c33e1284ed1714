#pragma once

// Discrete stochastic integrals and the Ito-formula residual.
//
// Forward integrals use the left node of each step; backward integrals use
// the right node together with the time-reversed increment.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bdsde/drivers.hpp"
#include "bdsde/parallel.hpp"

namespace bdsde {

enum class Adaptedness { forward, backward };

inline const char* to_string(Adaptedness a) {
  return a == Adaptedness::forward ? "forward" : "backward";
}

// Values indexed by (node, path, atom, component); nodes run 0..K.
class IntegrandField {
 public:
  IntegrandField() = default;
  IntegrandField(Adaptedness tag, std::size_t nodes, std::size_t paths, std::size_t atoms = 1,
                 std::size_t width = 1, double fill = 0.0)
      : tag_(tag),
        nodes_(nodes),
        paths_(paths),
        atoms_(atoms),
        width_(width),
        values_(nodes * paths * atoms * width, fill) {}

  Adaptedness tag() const { return tag_; }
  std::size_t nodes() const { return nodes_; }
  std::size_t paths() const { return paths_; }
  std::size_t atoms() const { return atoms_; }
  std::size_t width() const { return width_; }

  double& at(std::size_t k, std::size_t p, std::size_t a = 0, std::size_t c = 0) {
    return values_[((k * paths_ + p) * atoms_ + a) * width_ + c];
  }
  double at(std::size_t k, std::size_t p, std::size_t a = 0, std::size_t c = 0) const {
    return values_[((k * paths_ + p) * atoms_ + a) * width_ + c];
  }
  const double* row(std::size_t k, std::size_t p, std::size_t a = 0) const {
    return &values_[((k * paths_ + p) * atoms_ + a) * width_];
  }

 private:
  Adaptedness tag_ = Adaptedness::forward;
  std::size_t nodes_ = 0, paths_ = 0, atoms_ = 0, width_ = 0;
  std::vector<double> values_;
};

enum class ForwardDriver { brownian, compensated_M };
enum class BackwardDriver { white_noise, compensated_N0, raw_N1 };

namespace detail {

inline void require_shape(const IntegrandField& f, const DriverPaths& d, std::size_t atoms,
                          std::size_t width, const std::string& what) {
  if (f.nodes() != d.steps() + 1 || f.paths() != d.n_paths() || f.atoms() != atoms ||
      f.width() != width)
    throw std::invalid_argument(what + ": field shape does not conform to drivers (expected " +
                                std::to_string(d.steps() + 1) + " nodes x " +
                                std::to_string(d.n_paths()) + " paths x " +
                                std::to_string(atoms) + " atoms x " + std::to_string(width) +
                                ")");
}

}  // namespace detail

// Sum over steps k >= from of field[t_k] times the forward increment.
inline std::vector<double> forward_ito_integral(const IntegrandField& field,
                                                const DriverPaths& d, ForwardDriver kind,
                                                std::size_t from = 0) {
  if (field.tag() != Adaptedness::forward)
    throw std::invalid_argument("forward_ito_integral: field is tagged backward");
  const std::size_t K = d.steps();
  const auto& F = d.spaces().F;
  if (kind == ForwardDriver::brownian)
    detail::require_shape(field, d, 1, d.brownian_dim(), "forward_ito_integral");
  else
    detail::require_shape(field, d, F.size(), 1, "forward_ito_integral");
  std::vector<double> out(d.n_paths(), 0.0);
  parallel_for(d.n_paths(), [&](std::size_t p) {
    double acc = 0.0;
    for (std::size_t k = from; k < K; ++k) {
      if (kind == ForwardDriver::brownian) {
        for (std::size_t i = 0; i < d.brownian_dim(); ++i)
          acc += field.at(k, p, 0, i) * d.dB(k, p, i);
      } else {
        for (std::size_t a = 0; a < F.size(); ++a)
          acc += field.at(k, p, a) * (d.M(k, p, a) - d.grid().dt(k) * F.weight(a));
      }
    }
    out[p] = acc;
  });
  return out;
}

// Sum over steps k >= from of field[t_{k+1}] times the time-reversed
// increment over [t_k, t_{k+1}].
inline std::vector<double> backward_integral(const IntegrandField& field, const DriverPaths& d,
                                             BackwardDriver kind, std::size_t from = 0) {
  if (field.tag() != Adaptedness::backward)
    throw std::invalid_argument("backward_integral: field is tagged forward");
  const std::size_t K = d.steps();
  const auto& sp = d.spaces();
  switch (kind) {
    case BackwardDriver::white_noise:
      detail::require_shape(field, d, sp.E.size(), d.brownian_dim(), "backward_integral");
      break;
    case BackwardDriver::compensated_N0:
      detail::require_shape(field, d, sp.U0.size(), 1, "backward_integral");
      break;
    case BackwardDriver::raw_N1:
      detail::require_shape(field, d, sp.U1.size(), 1, "backward_integral");
      break;
  }
  const NoiseView rv = reverse_view(d);
  std::vector<double> out(d.n_paths(), 0.0);
  parallel_for(d.n_paths(), [&](std::size_t p) {
    double acc = 0.0;
    for (std::size_t k = from; k < K; ++k) {
      const double dt = d.grid().dt(k);
      switch (kind) {
        case BackwardDriver::white_noise:
          for (std::size_t e = 0; e < sp.E.size(); ++e)
            for (std::size_t i = 0; i < d.brownian_dim(); ++i)
              acc += field.at(k + 1, p, e, i) * rv.W(k, p, e, i);
          break;
        case BackwardDriver::compensated_N0:
          for (std::size_t u = 0; u < sp.U0.size(); ++u)
            acc += field.at(k + 1, p, u) * (rv.N0(k, p, u) - dt * sp.U0.weight(u));
          break;
        case BackwardDriver::raw_N1:
          for (std::size_t u = 0; u < sp.U1.size(); ++u)
            acc += field.at(k + 1, p, u) * rv.N1(k, p, u);
          break;
      }
    }
    out[p] = acc;
  });
  return out;
}

// f : R^m -> R with gradient and full Hessian.
struct TestFunction {
  std::string name;
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hessian;
};

inline TestFunction linear_test_function(Eigen::VectorXd c, double offset = 0.0) {
  const auto m = c.size();
  return {"linear", [c, offset](const Eigen::VectorXd& x) { return c.dot(x) + offset; },
          [c](const Eigen::VectorXd&) { return c; },
          [m](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(m, m); }};
}

// |x|^2
inline TestFunction square_test_function(std::size_t m = 1) {
  const auto mm = static_cast<Eigen::Index>(m);
  return {"square", [](const Eigen::VectorXd& x) { return x.squaredNorm(); },
          [](const Eigen::VectorXd& x) { return Eigen::VectorXd(2.0 * x); },
          [mm](const Eigen::VectorXd&) {
            return Eigen::MatrixXd(2.0 * Eigen::MatrixXd::Identity(mm, mm));
          }};
}

// X_t = X_T + int b ds + int a W(ds,du) + int g0 N0~(ds,du) + int g1 N1(ds,du)
//       - int Z dB - int zeta M~(ds,du)
// with backward integrals against the reversed drivers. Field layouts:
//   drift b: forward, 1 atom, width m
//   white_noise a: backward, |E| atoms, width m*n (row-major m x n)
//   jump_n0, jump_n1: backward, |U0| / |U1| atoms, width m
//   brownian Z: forward, 1 atom, width m*n
//   jump_m zeta: forward, |F| atoms, width m
struct ItoProcess {
  std::size_t dim = 1;
  std::vector<double> terminal;  // path-major, width m
  std::optional<IntegrandField> drift, white_noise, jump_n0, jump_n1, brownian, jump_m;
};

namespace detail {

inline const IntegrandField& require_term(const std::optional<IntegrandField>& f,
                                          const char* name, Adaptedness tag,
                                          const DriverPaths& d, std::size_t atoms,
                                          std::size_t width) {
  if (!f) throw std::invalid_argument(std::string("ito process: missing term '") + name + "'");
  if (f->tag() != tag)
    throw std::invalid_argument(std::string("ito process: term '") + name + "' must be tagged " +
                                to_string(tag));
  require_shape(*f, d, atoms, width, std::string("ito process term '") + name + "'");
  return *f;
}

struct ItoTerms {
  const IntegrandField *b, *a, *g0, *g1, *z, *zeta;
};

inline ItoTerms check_terms(const ItoProcess& x, const DriverPaths& d) {
  const std::size_t m = x.dim, n = d.brownian_dim();
  const auto& sp = d.spaces();
  if (x.terminal.size() != d.n_paths() * m)
    throw std::invalid_argument("ito process: terminal value has wrong size");
  return {&require_term(x.drift, "drift", Adaptedness::forward, d, 1, m),
          &require_term(x.white_noise, "white_noise", Adaptedness::backward, d, sp.E.size(),
                        m * n),
          &require_term(x.jump_n0, "jump_n0", Adaptedness::backward, d, sp.U0.size(), m),
          &require_term(x.jump_n1, "jump_n1", Adaptedness::backward, d, sp.U1.size(), m),
          &require_term(x.brownian, "brownian", Adaptedness::forward, d, 1, m * n),
          &require_term(x.jump_m, "jump_m", Adaptedness::forward, d, sp.F.size(), m)};
}

}  // namespace detail

// Path values X[k][p] (width m), obtained by stepping the defining
// relation backward from X_T.
inline std::vector<double> realize_ito_process(const ItoProcess& x, const DriverPaths& d) {
  const auto t = detail::check_terms(x, d);
  const std::size_t K = d.steps(), P = d.n_paths(), m = x.dim, n = d.brownian_dim();
  const auto& sp = d.spaces();
  const NoiseView rv = reverse_view(d);
  std::vector<double> X((K + 1) * P * m, 0.0);
  parallel_for(P, [&](std::size_t p) {
    for (std::size_t r = 0; r < m; ++r) X[(K * P + p) * m + r] = x.terminal[p * m + r];
    for (std::size_t k = K; k-- > 0;) {
      const double dt = d.grid().dt(k);
      for (std::size_t r = 0; r < m; ++r) {
        double inc = t.b->at(k, p, 0, r) * dt;
        for (std::size_t e = 0; e < sp.E.size(); ++e)
          for (std::size_t i = 0; i < n; ++i)
            inc += t.a->at(k + 1, p, e, r * n + i) * rv.W(k, p, e, i);
        for (std::size_t u = 0; u < sp.U0.size(); ++u)
          inc += t.g0->at(k + 1, p, u, r) * (rv.N0(k, p, u) - dt * sp.U0.weight(u));
        for (std::size_t u = 0; u < sp.U1.size(); ++u)
          inc += t.g1->at(k + 1, p, u, r) * rv.N1(k, p, u);
        for (std::size_t i = 0; i < n; ++i) inc -= t.z->at(k, p, 0, r * n + i) * d.dB(k, p, i);
        for (std::size_t a = 0; a < sp.F.size(); ++a)
          inc -= t.zeta->at(k, p, a, r) * (d.M(k, p, a) - dt * sp.F.weight(a));
        X[(k * P + p) * m + r] = X[((k + 1) * P + p) * m + r] + inc;
      }
    }
  });
  return X;
}

// f(X_t) minus the discretized right-hand side of the Ito formula over
// [t, T]. Forward-driver terms are evaluated at X_{t_k}, backward-driver
// terms at X_{t_{k+1}}.
inline std::vector<double> ito_residual(const TestFunction& f, const ItoProcess& x,
                                        const DriverPaths& d, std::size_t node) {
  const auto t = detail::check_terms(x, d);
  const std::size_t K = d.steps(), P = d.n_paths(), m = x.dim, n = d.brownian_dim();
  if (node > K) throw std::invalid_argument("ito_residual: node outside grid");
  const auto& sp = d.spaces();
  const NoiseView rv = reverse_view(d);
  const std::vector<double> X = realize_ito_process(x, d);
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ni = static_cast<Eigen::Index>(n);

  std::vector<double> out(P, 0.0);
  parallel_for(P, [&](std::size_t p) {
    auto state = [&](std::size_t k) {
      return Eigen::Map<const Eigen::VectorXd>(&X[(k * P + p) * m], mi).eval();
    };
    auto vec = [&](const IntegrandField& fld, std::size_t k, std::size_t a) {
      return Eigen::Map<const Eigen::VectorXd>(fld.row(k, p, a), mi).eval();
    };
    auto mat = [&](const IntegrandField& fld, std::size_t k, std::size_t a) {
      return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                            Eigen::RowMajor>>(fld.row(k, p, a), mi, ni)
          .eval();
    };

    double rhs = f.value(state(K));
    for (std::size_t k = node; k < K; ++k) {
      const double dt = d.grid().dt(k);
      const Eigen::VectorXd xl = state(k), xr = state(k + 1);
      const double fl = f.value(xl), fr = f.value(xr);
      const Eigen::VectorXd gl = f.gradient(xl), gr = f.gradient(xr);
      const Eigen::MatrixXd hl = f.hessian(xl), hr = f.hessian(xr);

      rhs += gl.dot(vec(*t.b, k, 0)) * dt;

      for (std::size_t e = 0; e < sp.E.size(); ++e) {
        const Eigen::MatrixXd a = mat(*t.a, k + 1, e);
        Eigen::VectorXd w(ni);
        for (std::size_t i = 0; i < n; ++i) w[static_cast<Eigen::Index>(i)] = rv.W(k, p, e, i);
        rhs += gr.dot(a * w);
        rhs += 0.5 * (a.transpose() * hr * a).trace() * sp.E.weight(e) * dt;
      }
      for (std::size_t u = 0; u < sp.U0.size(); ++u) {
        const Eigen::VectorXd g = vec(*t.g0, k + 1, u);
        const double jump = f.value(xr + g) - fr;
        rhs += jump * (rv.N0(k, p, u) - dt * sp.U0.weight(u));
        rhs += (jump - gr.dot(g)) * sp.U0.weight(u) * dt;
      }
      for (std::size_t u = 0; u < sp.U1.size(); ++u) {
        const Eigen::VectorXd g = vec(*t.g1, k + 1, u);
        rhs += (f.value(xr + g) - fr) * rv.N1(k, p, u);
      }

      const Eigen::MatrixXd z = mat(*t.z, k, 0);
      Eigen::VectorXd db(ni);
      for (std::size_t i = 0; i < n; ++i) db[static_cast<Eigen::Index>(i)] = d.dB(k, p, i);
      rhs -= gl.dot(z * db);
      rhs -= 0.5 * (z.transpose() * hl * z).trace() * dt;

      for (std::size_t a = 0; a < sp.F.size(); ++a) {
        const Eigen::VectorXd zeta = vec(*t.zeta, k, a);
        const double jump = f.value(xl + zeta) - fl;
        rhs -= jump * (d.M(k, p, a) - dt * sp.F.weight(a));
        rhs -= (jump - gl.dot(zeta)) * sp.F.weight(a) * dt;
      }
    }
    out[p] = f.value(state(node)) - rhs;
  });
  return out;
}

// Process with every integrand zero and terminal value xT on all paths.
inline ItoProcess zero_ito_process(const DriverPaths& d, std::size_t m = 1, double xT = 0.0) {
  const std::size_t K1 = d.steps() + 1, P = d.n_paths(), n = d.brownian_dim();
  const auto& sp = d.spaces();
  ItoProcess x;
  x.dim = m;
  x.terminal.assign(P * m, xT);
  x.drift = IntegrandField(Adaptedness::forward, K1, P, 1, m);
  x.white_noise = IntegrandField(Adaptedness::backward, K1, P, sp.E.size(), m * n);
  x.jump_n0 = IntegrandField(Adaptedness::backward, K1, P, sp.U0.size(), m);
  x.jump_n1 = IntegrandField(Adaptedness::backward, K1, P, sp.U1.size(), m);
  x.brownian = IntegrandField(Adaptedness::forward, K1, P, 1, m * n);
  x.jump_m = IntegrandField(Adaptedness::forward, K1, P, sp.F.size(), m);
  return x;
}

}  // namespace bdsde
