#include <gtest/gtest.h>

#include <cmath>

#include "bdsde/families.hpp"
#include "helpers.hpp"

using namespace bdsde;
using testing_helpers::atoms;
using testing_helpers::single_atom;

namespace {

MarkSpaces one_atom_spaces() {
  MarkSpaces sp;
  sp.E = single_atom("e", 1.0);
  return sp;
}

CloudSpec cloud_of(std::size_t n) {
  CloudSpec s;
  s.n_pairs = n;
  return s;
}

}  // namespace

TEST(Estimate, DoubledIdentityDriftGivesFour) {
  auto c = zero_coefficients(MarkSpaces{});
  c.beta = [](double, double y, Vec, Vec) { return 2.0 * y; };
  const auto est = estimate_lipschitz(c, make_cloud(c, cloud_of(3000)));
  EXPECT_NEAR(est.C_drift, 4.0, 1e-9);
  EXPECT_EQ(est.alpha_hat, 0.0);
  EXPECT_EQ(est.C_noise, 0.0);
}

TEST(Estimate, ZeroSigmaContributesNoAlpha) {
  const auto c = assemble_coefficients(one_atom_spaces(), 1, {"linear:1", "zero"});
  EXPECT_EQ(estimate_lipschitz(c, make_cloud(c)).alpha_hat, 0.0);
}

TEST(Estimate, SineDriftBoundedByOne) {
  auto c = zero_coefficients(MarkSpaces{});
  c.beta = [](double, double y, Vec, Vec) { return std::sin(y); };
  for (std::size_t n : {10u, 1000u, 10000u}) {
    const auto est = estimate_lipschitz(c, make_cloud(c, cloud_of(n)));
    EXPECT_LE(est.C_drift, 1.0 + 1e-9);
  }
}

TEST(Estimate, MonotoneUnderCloudEnlargement) {
  MarkSpaces sp = one_atom_spaces();
  sp.F = atoms({0.5}, {0.8});
  const auto c = assemble_coefficients(sp, 1, {"trig:0,0.5", "trig:0.3"});
  double prevC = 0.0, prevA = 0.0;
  for (std::size_t n : {3u, 30u, 300u, 3000u}) {
    const auto est = estimate_lipschitz(c, make_cloud(c, cloud_of(n)));
    EXPECT_GE(est.C_hat, prevC);
    EXPECT_GE(est.alpha_hat, prevA);
    prevC = est.C_hat;
    prevA = est.alpha_hat;
  }
  EXPECT_LE(prevC, c.lipschitz_C + 1e-9);
}

TEST(Estimate, CloudPrefixIsStable) {
  const auto a = make_cloud(2, 3, cloud_of(10));
  const auto b = make_cloud(2, 3, cloud_of(50));
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a[i].a.y, b[i].a.y);
    EXPECT_EQ(a[i].b.zeta, b[i].b.zeta);
  }
}

TEST(Estimate, FailingMapIsNamed) {
  auto c = zero_coefficients(MarkSpaces{});
  c.beta = [](double, double y, Vec, Vec) { return y > 0 ? std::log(-1.0) : 0.0; };
  try {
    estimate_lipschitz(c, make_cloud(c, cloud_of(50)));
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
  }
  auto d = zero_coefficients(MarkSpaces{});
  d.beta = [](double, double, Vec, Vec) -> double { throw std::runtime_error("boom"); };
  EXPECT_THROW(estimate_lipschitz(d, make_cloud(d, cloud_of(5))), std::runtime_error);
  EXPECT_THROW(estimate_lipschitz(d, Cloud{}), std::invalid_argument);
}

TEST(Structure, ContractionJumpIsMonotone) {
  MarkSpaces sp;
  sp.U0 = atoms({0.1, 0.5, 1.0}, {0.3, 0.3, 0.4});
  const auto c = assemble_coefficients(sp, 1, {"linear:-1", "zero", "contraction:1"});
  const auto rep = validate_comparison_structure(c, Hypothesis::thm41a, make_cloud(c));
  EXPECT_TRUE(rep.pass) << summarize(rep);
}

TEST(Structure, KernelBelowMinusOneFailsWithAtom) {
  MarkSpaces sp;
  sp.F = atoms({0.5}, {1.0});
  const auto c = assemble_coefficients(sp, 1, {"linear:0,0,0,-2"});
  const auto rep = validate_comparison_structure(c, Hypothesis::thm41a, make_cloud(c));
  EXPECT_FALSE(rep.pass);
  const auto* v = rep.first_violation();
  ASSERT_NE(v, nullptr);
  EXPECT_NE(v->clause.find("kernel"), std::string::npos);
  EXPECT_NE(v->counterexample.find("atom"), std::string::npos) << v->counterexample;
}

TEST(Structure, SquareRootDiffusionHalfHoelder) {
  const auto c = assemble_coefficients(one_atom_spaces(), 1, {"zero", "sqrt:1"});
  const auto rep = validate_comparison_structure(c, Hypothesis::thm43a, make_cloud(c, cloud_of(10000)));
  EXPECT_TRUE(rep.pass) << summarize(rep);
  EXPECT_FALSE(c.condition21);
}

TEST(Structure, IncreasingJumpBreaksMonotonicity) {
  MarkSpaces sp;
  sp.U1 = single_atom("u", 1.0);
  const auto c = assemble_coefficients(sp, 1, {"zero", "zero", "zero", "linear:-2"});
  const auto rep = validate_comparison_structure(c, Hypothesis::thm41b, make_cloud(c));
  EXPECT_FALSE(rep.pass);
  EXPECT_NE(rep.first_violation()->clause.find("nondecreasing"), std::string::npos);
}

TEST(Structure, Thm43RejectsZInDrift) {
  const auto c = assemble_coefficients(MarkSpaces{}, 1, {"linear:0,1"});
  EXPECT_FALSE(validate_comparison_structure(c, Hypothesis::thm43a, make_cloud(c)).pass);
  EXPECT_TRUE(validate_comparison_structure(c, Hypothesis::thm41a, make_cloud(c)).pass);
}

TEST(Structure, LemmaNonPositivityClauses) {
  MarkSpaces sp;
  sp.U0 = single_atom("u", 1.0, 0.5);
  auto ok = assemble_coefficients(sp, 1, {"linear:-1", "zero", "contraction:1"});
  EXPECT_TRUE(validate_comparison_structure(ok, Hypothesis::lemma41, make_cloud(ok)).pass);
  auto bad = assemble_coefficients(sp, 1, {"linear:-1", "zero", "constant:0.5"});
  const auto rep = validate_comparison_structure(bad, Hypothesis::lemma41, make_cloud(bad));
  EXPECT_FALSE(rep.pass);
}

TEST(Structure, Thm43bNeedsNonnegativeKernel) {
  MarkSpaces sp;
  sp.F = atoms({0.5}, {1.0});
  const auto pos = assemble_coefficients(sp, 1, {"linear:0,0,0,0.5"});
  const auto neg = assemble_coefficients(sp, 1, {"linear:0,0,0,-0.5"});
  EXPECT_TRUE(validate_comparison_structure(pos, Hypothesis::thm43b, make_cloud(pos)).pass);
  EXPECT_FALSE(validate_comparison_structure(neg, Hypothesis::thm43b, make_cloud(neg)).pass);
  EXPECT_TRUE(validate_comparison_structure(neg, Hypothesis::thm43a, make_cloud(neg)).pass);
}

TEST(Structure, AdvisoryVariantsAreFlagged) {
  MarkSpaces sp;
  sp.F = atoms({0.5}, {1.0});
  const auto c = assemble_coefficients(sp, 1, {"linear:0,0,0,0.5"});
  const auto r1 = validate_comparison_structure(c, Hypothesis::prop41, make_cloud(c));
  const auto r2 = validate_comparison_structure(c, Hypothesis::remark41_4prime, make_cloud(c));
  EXPECT_TRUE(r1.advisory);
  EXPECT_TRUE(r2.advisory);
  EXPECT_TRUE(r2.pass) << summarize(r2);
}

TEST(Structure, PassIsStableUnderCloudGrowth) {
  MarkSpaces sp = one_atom_spaces();
  sp.U0 = atoms({0.2, 0.9}, {0.5, 0.5});
  sp.F = atoms({0.5}, {0.5});
  const auto c = assemble_coefficients(sp, 1, {"trig:0,0.5", "trig:0.3", "contraction:1"});
  for (std::size_t n : {100u, 1000u, 5000u})
    EXPECT_TRUE(validate_comparison_structure(c, Hypothesis::thm41a, make_cloud(c, cloud_of(n))).pass);
}

TEST(Structure, UnknownHypothesisRejected) {
  EXPECT_THROW(parse_hypothesis("thm99"), std::invalid_argument);
  EXPECT_EQ(parse_hypothesis("thm43b"), Hypothesis::thm43b);
}

TEST(Structure, DriftAgreesWithStructureRecord) {
  MarkSpaces sp;
  sp.F = atoms({0.3, 0.6}, {0.4, 0.9});
  const auto c = assemble_coefficients(sp, 2, {"linear:0.5,-0.3,1,0.25"});
  ASSERT_TRUE(c.drift_structure);
  const auto rebuilt = drift_from_structure(*c.drift_structure, sp.F);
  for (const auto& pr : make_cloud(c, cloud_of(300)))
    EXPECT_NEAR(c.beta(pr.a.s, pr.a.y, pr.a.z, pr.a.zeta),
                rebuilt(pr.a.s, pr.a.y, pr.a.z, pr.a.zeta), 1e-12);
}

TEST(Families, UnknownNamesAndExcessParametersRejected) {
  EXPECT_THROW(assemble_coefficients(MarkSpaces{}, 1, {"cubic"}), std::invalid_argument);
  EXPECT_THROW(assemble_coefficients(MarkSpaces{}, 1, {"constant:1,2"}), std::invalid_argument);
  EXPECT_THROW(make_terminal("gaussian"), std::invalid_argument);
}

TEST(Families, UserRegisteredFamilyIsSelectable) {
  register_drift_family("tanh", [](const FamilySpec& f, const MarkSpaces&, std::size_t) {
    const double c = f.param(0, 1.0);
    DriftPiece p;
    p.beta = [c](double, double y, Vec, Vec) { return c * std::tanh(y); };
    p.lipschitz_sq = c * c;
    return p;
  });
  const auto c = assemble_coefficients(MarkSpaces{}, 1, {"tanh:3"});
  EXPECT_NEAR(c.beta(0, 1.0, {}, {}), 3.0 * std::tanh(1.0), 1e-15);
  EXPECT_EQ(c.lipschitz_C, 9.0);
  EXPECT_TRUE(c.condition21);
}

TEST(Terminal, KindsRealizeOverPaths) {
  MarkSpaces sp;
  sp.F = atoms({0.5}, {1.0});
  const auto d = simulate_drivers(TimeGrid::uniform(1.0, 4), sp, 25, 3);
  for (double v : make_terminal("constant:2.5").realize(d)) EXPECT_EQ(v, 2.5);
  const auto b = make_terminal("brownian").realize(d);
  const auto na = make_terminal("neg_abs").realize(d);
  const auto mc = make_terminal("mcount").realize(d);
  for (std::size_t p = 0; p < 25; ++p) {
    double s = 0.0, m = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      s += d.dB(k, p, 0);
      m += d.M(k, p, 0);
    }
    EXPECT_EQ(b[p], s);
    EXPECT_EQ(na[p], -std::abs(s));
    EXPECT_EQ(mc[p], m);
  }
  EXPECT_THROW(TerminalCondition::scripted_values({1.0}).realize(d), std::invalid_argument);
  EXPECT_THROW(TerminalCondition::constant(NAN).realize(d), std::invalid_argument);
}
