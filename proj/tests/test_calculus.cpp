#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bdsde/calculus.hpp"
#include "helpers.hpp"

using namespace bdsde;
using testing_helpers::atoms;
using testing_helpers::moments;
using testing_helpers::single_atom;

namespace {

MarkSpaces jump_spaces() {
  MarkSpaces sp;
  sp.E = atoms({0.3, 0.7}, {0.5, 1.5});
  sp.U0 = single_atom("u0", 1.2);
  sp.U1 = single_atom("u1", 0.8);
  sp.F = atoms({0.4, 0.9}, {0.7, 0.6});
  return sp;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double mean_abs(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST(ForwardIntegral, ZeroFieldGivesZero) {
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 6), jump_spaces(), 40, 1);
  const IntegrandField z(Adaptedness::forward, 7, 40);
  for (double v : forward_ito_integral(z, d, ForwardDriver::brownian)) EXPECT_EQ(v, 0.0);
  const IntegrandField zm(Adaptedness::forward, 7, 40, 2);
  for (double v : forward_ito_integral(zm, d, ForwardDriver::compensated_M)) EXPECT_EQ(v, 0.0);
}

TEST(ForwardIntegral, UnitFieldTelescopesToTerminalBrownian) {
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 9), MarkSpaces{}, 30, 2);
  const IntegrandField one(Adaptedness::forward, 10, 30, 1, 1, 1.0);
  const auto I = forward_ito_integral(one, d, ForwardDriver::brownian);
  for (std::size_t p = 0; p < 30; ++p) {
    double b = 0.0;
    for (std::size_t k = 0; k < 9; ++k) b += d.dB(k, p, 0);
    EXPECT_DOUBLE_EQ(I[p], b);
  }
}

TEST(ForwardIntegral, ItoIsometryForBrownianIntegrand) {
  const std::size_t K = 20, P = 10000;
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, K), MarkSpaces{}, P, 3);
  IntegrandField z(Adaptedness::forward, K + 1, P);
  for (std::size_t p = 0; p < P; ++p) {
    double b = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
      z.at(k, p) = b;
      if (k < K) b += d.dB(k, p, 0);
    }
  }
  const auto I = forward_ito_integral(z, d, ForwardDriver::brownian);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    lhs += I[p] * I[p];
    for (std::size_t k = 0; k < K; ++k) rhs += z.at(k, p) * z.at(k, p) * d.grid().dt(k);
  }
  EXPECT_NEAR(lhs / rhs, 1.0, 0.05);
}

TEST(ForwardIntegral, AdaptedIntegralsCenterAtZero) {
  const std::size_t K = 8, P = 10000;
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, K), jump_spaces(), P, 4);
  IntegrandField z(Adaptedness::forward, K + 1, P);
  IntegrandField zeta(Adaptedness::forward, K + 1, P, 2);
  for (std::size_t p = 0; p < P; ++p) {
    double b = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
      z.at(k, p) = std::cos(b);
      zeta.at(k, p, 0) = 1.0 + b * b;
      zeta.at(k, p, 1) = -0.5;
      if (k < K) b += d.dB(k, p, 0);
    }
  }
  for (const auto& v : {forward_ito_integral(z, d, ForwardDriver::brownian),
                        forward_ito_integral(zeta, d, ForwardDriver::compensated_M)}) {
    const auto m = moments(v);
    EXPECT_LE(std::abs(m.mean), 4.0 * std::sqrt(m.var / P));
  }
}

TEST(ForwardIntegral, RejectsBackwardTagAndBadShape) {
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 4), jump_spaces(), 10, 1);
  EXPECT_THROW(forward_ito_integral(IntegrandField(Adaptedness::backward, 5, 10), d,
                                    ForwardDriver::brownian),
               std::invalid_argument);
  EXPECT_THROW(forward_ito_integral(IntegrandField(Adaptedness::forward, 4, 10), d,
                                    ForwardDriver::brownian),
               std::invalid_argument);
  EXPECT_THROW(forward_ito_integral(IntegrandField(Adaptedness::forward, 5, 10, 1), d,
                                    ForwardDriver::compensated_M),
               std::invalid_argument);
}

TEST(BackwardIntegral, ZeroFieldGivesZero) {
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 5), jump_spaces(), 20, 1);
  for (auto kind : {BackwardDriver::white_noise, BackwardDriver::compensated_N0,
                    BackwardDriver::raw_N1}) {
    const std::size_t na = kind == BackwardDriver::white_noise ? 2 : 1;
    const IntegrandField z(Adaptedness::backward, 6, 20, na);
    EXPECT_EQ(max_abs(backward_integral(z, d, kind)), 0.0);
  }
}

TEST(BackwardIntegral, ConstantSigmaVarianceAdds) {
  const std::size_t P = 10000;
  MarkSpaces sp;
  sp.E = atoms({0.2, 0.5, 0.8}, {0.4, 0.4, 0.7});
  const double T = 1.5, s = 0.8;
  const auto d = simulate_drivers(TimeGrid::uniform(T, 10), sp, P, 17);
  const IntegrandField sigma(Adaptedness::backward, 11, P, 3, 1, s);
  const auto m = moments(backward_integral(sigma, d, BackwardDriver::white_noise));
  const double expected = T * s * s * sp.E.total_mass();
  EXPECT_NEAR(m.var / expected, 1.0, 0.05);
}

TEST(BackwardIntegral, CompensatedN0CentersAndRawN1Drifts) {
  const std::size_t K = 6, P = 10000;
  const auto sp = jump_spaces();
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, K), sp, P, 23);
  IntegrandField f(Adaptedness::backward, K + 1, P);
  for (std::size_t k = 0; k <= K; ++k)
    for (std::size_t p = 0; p < P; ++p) f.at(k, p) = 1.0 + 0.3 * static_cast<double>(k);
  const auto m0 = moments(backward_integral(f, d, BackwardDriver::compensated_N0));
  EXPECT_LE(std::abs(m0.mean), 4.0 * std::sqrt(m0.var / P));
  const auto m1 = moments(backward_integral(f, d, BackwardDriver::raw_N1));
  double centre = 0.0;
  for (std::size_t k = 0; k < K; ++k) centre += d.grid().dt(k) * f.at(k + 1, 0) * sp.U1.weight(0);
  EXPECT_LE(std::abs(m1.mean - centre), 4.0 * std::sqrt(m1.var / P));
}

TEST(BackwardIntegral, UsesRightEndpointAndReversedIncrement) {
  const std::size_t K = 3;
  MarkSpaces sp;
  sp.E = single_atom("e", 1.0);
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, K), sp, 2, 5);
  IntegrandField f(Adaptedness::backward, K + 1, 2);
  for (std::size_t k = 0; k <= K; ++k) f.at(k, 0) = static_cast<double>(k * k);
  const double expected =
      1.0 * d.W(2, 0, 0, 0) + 4.0 * d.W(1, 0, 0, 0) + 9.0 * d.W(0, 0, 0, 0);
  EXPECT_DOUBLE_EQ(backward_integral(f, d, BackwardDriver::white_noise)[0], expected);
}

TEST(BackwardIntegral, RejectsForwardTag) {
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 4), jump_spaces(), 10, 1);
  EXPECT_THROW(backward_integral(IntegrandField(Adaptedness::forward, 5, 10), d,
                                 BackwardDriver::compensated_N0),
               std::invalid_argument);
}

namespace {

// A process with every term switched on and path-dependent integrands.
ItoProcess busy_process(const DriverPaths& d) {
  const std::size_t K = d.steps(), P = d.n_paths();
  ItoProcess x = zero_ito_process(d, 1, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    double b = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
      x.drift->at(k, p) = 0.5 - 0.2 * b;
      x.brownian->at(k, p) = 0.4 + 0.1 * std::sin(b);
      for (std::size_t a = 0; a < d.spaces().F.size(); ++a) x.jump_m->at(k, p, a) = 0.1 * (a + 1);
      for (std::size_t e = 0; e < d.spaces().E.size(); ++e)
        x.white_noise->at(k, p, e) = 0.3 / static_cast<double>(e + 1);
      x.jump_n0->at(k, p) = -0.2;
      x.jump_n1->at(k, p) = 0.15;
      if (k < K) b += d.dB(k, p, 0);
    }
    x.terminal[p] = std::cos(b);
  }
  return x;
}

}  // namespace

TEST(ItoResidual, LinearFunctionReproducesTheProcess) {
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 12), jump_spaces(), 500, 31);
  const auto x = busy_process(d);
  Eigen::VectorXd c(1);
  c << 2.5;
  const auto f = linear_test_function(c, -1.0);
  const auto X = realize_ito_process(x, d);
  double scale = 1.0;
  for (double v : X) scale = std::max(scale, std::abs(v));
  for (std::size_t node : {0u, 5u, 12u}) {
    const auto r = ito_residual(f, x, d, node);
    EXPECT_LT(max_abs(r), 1e-10);
    EXPECT_LT(max_abs(r), 10.0 * std::numeric_limits<double>::epsilon() * 2.5 * scale * 40.0);
  }
}

TEST(ItoResidual, ConstantProcessIsExact) {
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 8), jump_spaces(), 100, 2);
  const auto x = zero_ito_process(d, 1, 3.0);
  for (double v : ito_residual(square_test_function(), x, d, 0)) EXPECT_EQ(v, 0.0);
}

TEST(ItoResidual, MissingTermIsNamed) {
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 4), jump_spaces(), 10, 2);
  auto x = zero_ito_process(d);
  x.jump_n0.reset();
  try {
    ito_residual(square_test_function(), x, d, 0);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("jump_n0"), std::string::npos);
  }
  x = zero_ito_process(d);
  x.brownian = IntegrandField(Adaptedness::backward, 5, 10);
  EXPECT_THROW(ito_residual(square_test_function(), x, d, 0), std::invalid_argument);
}

TEST(ItoResidual, SquareOfBrownianShrinksWithStep) {
  // residual = sum (dt - dB^2): mean |.| scales like K^{-1/2}
  std::vector<double> errs;
  for (std::size_t K : {16u, 32u, 64u}) {
    const auto d = simulate_drivers(TimeGrid::uniform(1.0, K), MarkSpaces{}, 10000, 41);
    auto x = zero_ito_process(d);
    for (std::size_t p = 0; p < d.n_paths(); ++p) {
      double b = 0.0;
      for (std::size_t k = 0; k < K; ++k) b += d.dB(k, p, 0);
      x.terminal[p] = b;
      for (std::size_t k = 0; k <= K; ++k) x.brownian->at(k, p) = 1.0;
    }
    errs.push_back(mean_abs(ito_residual(square_test_function(), x, d, 0)));
  }
  EXPECT_LT(errs[1], errs[0]);
  EXPECT_LT(errs[2], errs[1]);
  for (std::size_t i = 1; i < errs.size(); ++i)
    EXPECT_NEAR(errs[i] / errs[i - 1], std::sqrt(0.5), 0.05);
}

TEST(ItoResidual, SecondOrderTermsWithAllDrivers) {
  // mean residual for f = x^2 shrinks when the grid is refined
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t K : {8u, 32u}) {
    const auto d = simulate_drivers(TimeGrid::uniform(1.0, K), jump_spaces(), 4000, 43);
    const auto x = busy_process(d);
    const double e = std::abs(moments(ito_residual(square_test_function(), x, d, 0)).mean);
    EXPECT_LT(e, prev);
    prev = e;
  }
}
