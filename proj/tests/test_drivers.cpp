#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "bdsde/drivers.hpp"
#include "helpers.hpp"

using namespace bdsde;
using testing_helpers::atoms;
using testing_helpers::single_atom;

namespace {

MarkSpaces rich_spaces() {
  MarkSpaces sp;
  sp.E = atoms({0.25, 0.75}, {0.6, 1.4});
  sp.U0 = single_atom("u0", 1.5);
  sp.U1 = single_atom("u1", 2.0);
  sp.F = atoms({0.2, 0.8}, {0.5, 1.0});
  return sp;
}

}  // namespace

TEST(TimeGrid, UniformEndsExactlyAtHorizon) {
  const auto g = TimeGrid::uniform(0.7, 13);
  EXPECT_EQ(g.node(0), 0.0);
  EXPECT_EQ(g.node(13), 0.7);
  for (std::size_t k = 0; k < 13; ++k) EXPECT_GT(g.dt(k), 0.0);
}

TEST(TimeGrid, RejectsBadNodes) {
  EXPECT_THROW(TimeGrid({0.0}), std::invalid_argument);
  EXPECT_THROW(TimeGrid({0.1, 1.0}), std::invalid_argument);
  EXPECT_THROW(TimeGrid({0.0, 0.5, 0.5}), std::invalid_argument);
  EXPECT_THROW(TimeGrid::uniform(1.0, 0), std::invalid_argument);
}

TEST(Simulate, RepeatCallIsBitIdentical) {
  const auto g = TimeGrid::uniform(1.0, 8);
  const auto a = simulate_drivers(g, rich_spaces(), 300, 42);
  const auto b = simulate_drivers(g, rich_spaces(), 300, 42);
  EXPECT_TRUE(a == b);
  const auto c = simulate_drivers(g, rich_spaces(), 300, 43);
  EXPECT_FALSE(a == c);
}

TEST(Simulate, ThreadCountDoesNotChangeOutput) {
  const auto g = TimeGrid::uniform(1.0, 8);
  DriverOptions one, four;
  one.threads = 1;
  four.threads = 4;
  EXPECT_TRUE(simulate_drivers(g, rich_spaces(), 1000, 7, one) ==
              simulate_drivers(g, rich_spaces(), 1000, 7, four));
}

TEST(Simulate, ExtendingPathCountKeepsPrefix) {
  const auto g = TimeGrid::uniform(1.0, 6);
  const auto small = simulate_drivers(g, rich_spaces(), 50, 9);
  const auto big = simulate_drivers(g, rich_spaces(), 80, 9);
  for (std::size_t k = 0; k < 6; ++k)
    for (std::size_t p = 0; p < 50; ++p) {
      EXPECT_EQ(small.dB(k, p, 0), big.dB(k, p, 0));
      for (std::size_t e = 0; e < 2; ++e) EXPECT_EQ(small.W(k, p, e, 0), big.W(k, p, e, 0));
      EXPECT_EQ(small.N0(k, p, 0), big.N0(k, p, 0));
      EXPECT_EQ(small.N1(k, p, 0), big.N1(k, p, 0));
      for (std::size_t a = 0; a < 2; ++a) EXPECT_EQ(small.M(k, p, a), big.M(k, p, a));
    }
}

TEST(Simulate, PoissonMeanMatchesIntensity) {
  // mu1 mass 2, dt = 0.1: mean count 0.2
  MarkSpaces sp;
  sp.U1 = single_atom("u", 2.0);
  const auto d = simulate_drivers(TimeGrid::uniform(0.1, 1), sp, 100000, 3);
  double s = 0.0;
  for (std::size_t p = 0; p < d.n_paths(); ++p) s += d.N1(0, p, 0);
  const double mean = s / 1e5;
  EXPECT_NEAR(mean, 0.2, 4.0 * std::sqrt(0.2 / 1e5));
}

TEST(Simulate, BrownianVarianceWithinChiSquareBand) {
  const auto d = simulate_drivers(TimeGrid::uniform(0.01, 1), MarkSpaces{}, 100000, 11);
  double s = 0.0, s2 = 0.0;
  for (std::size_t p = 0; p < d.n_paths(); ++p) {
    s += d.dB(0, p, 0);
    s2 += d.dB(0, p, 0) * d.dB(0, p, 0);
  }
  const double n = 1e5, mean = s / n;
  const double var = (s2 - n * mean * mean) / (n - 1);
  EXPECT_NEAR(var, 0.01, 3.0 * std::sqrt(2.0 / n) * 0.01);
}

TEST(Simulate, WhiteNoiseVariancePerAtomAndComponent) {
  MarkSpaces sp;
  sp.E = atoms({0.1, 0.9}, {0.5, 2.0});
  DriverOptions opt;
  opt.brownian_dim = 2;
  const auto d = simulate_drivers(TimeGrid::uniform(0.5, 2), sp, 20000, 5, opt);
  for (std::size_t e = 0; e < 2; ++e)
    for (std::size_t i = 0; i < 2; ++i) {
      double s2 = 0.0;
      for (std::size_t p = 0; p < d.n_paths(); ++p) s2 += d.W(1, p, e, i) * d.W(1, p, e, i);
      const double expected = 0.25 * sp.E.weight(e);
      EXPECT_NEAR(s2 / 20000.0, expected, 4.0 * std::sqrt(2.0 / 20000.0) * expected);
    }
}

TEST(Simulate, IndependenceAuditBrownianVersusWhiteNoise) {
  MarkSpaces sp;
  sp.E = single_atom("e", 1.0);
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 4), sp, 10000, 21);
  const NoiseView rv = reverse_view(d);
  for (std::size_t k = 0; k < 4; ++k) {
    double sb = 0, sw = 0, sbb = 0, sww = 0, sbw = 0;
    for (std::size_t p = 0; p < d.n_paths(); ++p) {
      const double b = d.dB(k, p, 0), w = rv.W(k, p, 0, 0);
      sb += b;
      sw += w;
      sbb += b * b;
      sww += w * w;
      sbw += b * w;
    }
    const double n = 1e4;
    const double cov = sbw / n - (sb / n) * (sw / n);
    const double corr =
        cov / std::sqrt((sbb / n - sb * sb / n / n) * (sww / n - sw * sw / n / n));
    EXPECT_LE(std::abs(corr), 4.0 / std::sqrt(n)) << k;
  }
}

TEST(Simulate, CompensatedCountsCenterAtZero) {
  const auto sp = rich_spaces();
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 5), sp, 10000, 8);
  const double n = 1e4;
  for (std::size_t k = 0; k < 5; ++k) {
    const double dt = d.grid().dt(k);
    auto check = [&](auto count, double weight) {
      double s = 0.0;
      for (std::size_t p = 0; p < d.n_paths(); ++p) s += count(p) - dt * weight;
      EXPECT_LE(std::abs(s / n), 4.0 * std::sqrt(dt * weight / n));
    };
    check([&](std::size_t p) { return d.N0(k, p, 0); }, sp.U0.weight(0));
    check([&](std::size_t p) { return d.N1(k, p, 0); }, sp.U1.weight(0));
    for (std::size_t a = 0; a < 2; ++a)
      check([&](std::size_t p) { return d.M(k, p, a); }, sp.F.weight(a));
  }
}

TEST(Simulate, ZeroMassSpacesMeanNoJumps) {
  MarkSpaces sp;
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 3), sp, 10, 1);
  EXPECT_EQ(d.spaces().F.size(), 0u);
  EXPECT_EQ(d.n_paths(), 10u);
}

TEST(Simulate, RejectsZeroPaths) {
  EXPECT_THROW(simulate_drivers(TimeGrid::uniform(1.0, 3), MarkSpaces{}, 0, 1),
               std::invalid_argument);
}

TEST(Reverse, InvolutionOnFourSteps) {
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 4), rich_spaces(), 20, 2);
  const NoiseView fwd(d);
  const NoiseView twice = reverse_view(reverse_view(d));
  EXPECT_TRUE(twice == fwd);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t p = 0; p < 20; ++p) EXPECT_EQ(twice.W(k, p, 1, 0), fwd.W(k, p, 1, 0));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(d.reversal(d.reversal(k)), k);
}

TEST(Reverse, SlotZeroCarriesForwardSlotThree) {
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 4), rich_spaces(), 5, 4);
  const NoiseView rv = reverse_view(d);
  for (std::size_t p = 0; p < 5; ++p) {
    EXPECT_EQ(rv.W(0, p, 0, 0), d.W(3, p, 0, 0));
    EXPECT_EQ(rv.N0(0, p, 0), d.N0(3, p, 0));
    EXPECT_EQ(rv.N1(3, p, 0), d.N1(0, p, 0));
    EXPECT_EQ(rv.dB(0, p, 0), d.dB(0, p, 0));
  }
}

TEST(Reverse, SumsArePreserved) {
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 7), rich_spaces(), 30, 6);
  const NoiseView rv = reverse_view(d);
  for (std::size_t p = 0; p < 30; ++p) {
    double a = 0.0, b = 0.0;
    for (std::size_t k = 0; k < 7; ++k) {
      a += d.W(k, p, 1, 0);
      b += rv.W(k, p, 1, 0);
    }
    EXPECT_DOUBLE_EQ(a, b);
  }
}

TEST(Reverse, NonUniformGridSlotLengths) {
  const TimeGrid g({0.0, 0.1, 0.4, 1.0});
  MarkSpaces sp;
  sp.E = single_atom("e", 1.0);
  const auto d = simulate_drivers(g, sp, 4000, 12);
  const NoiseView rv = reverse_view(d);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_DOUBLE_EQ(rv.slot_length(k), g.dt(k));
    double s2 = 0.0;
    for (std::size_t p = 0; p < 4000; ++p) s2 += rv.W(k, p, 0, 0) * rv.W(k, p, 0, 0);
    EXPECT_NEAR(s2 / 4000.0, g.dt(k), 5.0 * std::sqrt(2.0 / 4000.0) * g.dt(k));
  }
}

TEST(Enumeration, TreeStructureAndWeights) {
  MarkSpaces sp;
  sp.F = single_atom("f", 0.5);
  sp.U1 = single_atom("u", 1.0);
  DriverOptions opt;
  opt.mode = DriverMode::enumeration;
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 3), sp, 2, 5, opt);
  EXPECT_EQ(d.branching(), 4u);
  EXPECT_EQ(d.leaves_per_scenario(), 64u);
  EXPECT_EQ(d.n_paths(), 128u);
  double total = 0.0;
  for (double w : d.path_weights()) total += w;
  EXPECT_NEAR(total, 1.0, 1e-14);
  const double sq = std::sqrt(1.0 / 3.0);
  for (std::size_t p = 0; p < d.n_paths(); ++p)
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_DOUBLE_EQ(std::abs(d.dB(k, p, 0)), sq);
      EXPECT_LE(d.M(k, p, 0), 1u);
    }
  // backward drivers shared within a scenario
  for (std::size_t p = 1; p < 64; ++p) EXPECT_EQ(d.N1(0, p, 0), d.N1(0, 0, 0));
  // paths in a node-k group share the forward history before k
  const std::size_t g1 = d.group_size(1);
  EXPECT_EQ(g1, 16u);
  for (std::size_t p = 0; p < g1; ++p) EXPECT_EQ(d.dB(0, p, 0), d.dB(0, 0, 0));
  EXPECT_NEAR(d.m_count_variance(0, 0), (0.5 / 3.0) * (1.0 - 0.5 / 3.0), 1e-15);
}

TEST(Enumeration, RejectsOversizedTreesAndLargeRates) {
  DriverOptions opt;
  opt.mode = DriverMode::enumeration;
  EXPECT_THROW(simulate_drivers(TimeGrid::uniform(1.0, 13), MarkSpaces{}, 1, 1, opt),
               std::invalid_argument);
  MarkSpaces sp;
  sp.F = single_atom("f", 5.0);
  EXPECT_THROW(simulate_drivers(TimeGrid::uniform(1.0, 2), sp, 1, 1, opt), std::invalid_argument);
}

TEST(Export, CsvHasOneRowPerStepAndPath) {
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 3), rich_spaces(), 4, 1);
  std::ostringstream os;
  write_drivers_csv(os, d);
  const std::string s = os.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 3 * 4);
  EXPECT_EQ(s.substr(0, 22), "k,p,t,dt,weight,dB0,dW");
}
