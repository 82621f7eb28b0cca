#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace fopca;

namespace {

MpLaw single_law(double phi, double sigma2 = 1.0) {
  return solve_law(SpectralMeasure::single(sigma2), phi);
}

double closed_form_density(double phi, double x) {
  const double a1 = std::pow(1 + std::sqrt(phi), 2), a2 = std::pow(1 - std::sqrt(phi), 2);
  if (x <= a2 || x >= a1) return 0.0;
  return std::sqrt((a1 - x) * (x - a2)) / (2 * std::numbers::pi * phi * x);
}

// Nonzero eigenvalues of Sigma^{1/2} E E' Sigma^{1/2} / T for Sigma = diag(d).
Vector simulated_spectrum(const Vector &d, Eigen::Index t, std::uint64_t seed) {
  Matrix e = testutil::gaussian(d.size(), t, seed);
  e = d.array().sqrt().matrix().asDiagonal() * e;
  const Vector s = linalg::singular_values(e);
  return s.array().square() / static_cast<double>(t);
}

bool inside_support(const MpLaw &law, double x, double inflate) {
  for (const auto &[lo, hi] : law.bulks) {
    if (x >= lo * (1 - inflate) && x <= hi * (1 + inflate)) return true;
  }
  return false;
}

}  // namespace

TEST(SpectralMeasure, Validation) {
  EXPECT_THROW(SpectralMeasure(std::vector<SpectralMeasure::Atom>{}), Error);
  EXPECT_THROW(SpectralMeasure({{1.0, 0.5}, {2.0, 0.5}}), Error);
  EXPECT_THROW(SpectralMeasure({{1.0, 0.6}, {0.5, 0.5}}), Error);
  EXPECT_THROW(SpectralMeasure({{-1.0, 1.0}}), Error);
  const auto m = SpectralMeasure::from_eigenvalues({1.0, 2.0, 2.0, 0.5});
  ASSERT_EQ(m.size(), 3u);
  EXPECT_DOUBLE_EQ(m.atoms()[0].s, 2.0);
  EXPECT_DOUBLE_EQ(m.atoms()[0].weight, 0.5);
}

TEST(EvaluateF, SingleAtomHandValue) {
  const auto m = SpectralMeasure::single(1.0);
  EXPECT_NEAR(evaluate_f(m, 0.5, -2.0), 0.0, 1e-15);
  EXPECT_GT(evaluate_f(m, 0.5, -1e-8), 1e7);
}

TEST(EvaluateF, TwoAtomsMatchTermSum) {
  const SpectralMeasure m({{2.0, 0.5}, {1.0, 0.5}});
  // Term-by-term: -1/x + 0.25/(x + 1/2) + 0.25/(x + 1), x = -0.25.
  EXPECT_NEAR(evaluate_f(m, 0.5, -0.25), 5.3333333333333333, 1e-14);
}

TEST(EvaluateF, DerivativesMatchFiniteDifferences) {
  const SpectralMeasure m({{3.0, 0.2}, {1.5, 0.5}, {0.7, 0.3}});
  for (double x : {-0.1, -0.5, -2.0, 0.4}) {
    const double h = 1e-6;
    const double fd = (evaluate_f(m, 0.4, x + h) - evaluate_f(m, 0.4, x - h)) / (2 * h);
    EXPECT_NEAR(evaluate_df(m, 0.4, x), fd, 1e-5 * std::max(1.0, std::abs(fd)));
    const double fd2 = (evaluate_df(m, 0.4, x + h) - evaluate_df(m, 0.4, x - h)) / (2 * h);
    EXPECT_NEAR(evaluate_d2f(m, 0.4, x), fd2, 1e-4 * std::max(1.0, std::abs(fd2)));
  }
}

TEST(EvaluateF, PolesRaise) {
  const SpectralMeasure m({{2.0, 0.5}, {1.0, 0.5}});
  for (double x : {0.0, -0.5, -1.0}) {
    try {
      evaluate_f(m, 0.5, x);
      FAIL();
    } catch (const Error &e) {
      EXPECT_EQ(e.code(), Errc::pole);
    }
  }
}

TEST(SolveLaw, SingleAtomClosedForm) {
  for (double phi : {0.25, 0.5, 2.0}) {
    const MpLaw law = single_law(phi);
    ASSERT_EQ(law.p(), 1u);
    EXPECT_NEAR(law.edges[0], std::pow(1 + std::sqrt(phi), 2), 1e-10);
    EXPECT_NEAR(law.edges[1], std::pow(1 - std::sqrt(phi), 2), 1e-10);
    EXPECT_NEAR(law.critical_points[0], -1.0 / (1 + std::sqrt(phi)), 1e-10);
    EXPECT_NEAR(law.critical_points[1], -1.0 / (1 - std::sqrt(phi)), 1e-9);
  }
  const MpLaw half = single_law(0.5);
  EXPECT_NEAR(half.edges[1], 0.0857864376269049, 1e-12);
  EXPECT_NEAR(half.edges[0], 2.914213562373095, 1e-12);
}

TEST(SolveLaw, ScaleEquivariance) {
  const SpectralMeasure base({{4.0, 0.3}, {2.0, 0.3}, {0.5, 0.4}});
  const MpLaw law = solve_law(base, 0.3);
  for (double c : {0.1, 2.5, 9.0}) {
    std::vector<SpectralMeasure::Atom> atoms;
    for (auto a : base.atoms()) atoms.push_back({a.s * c, a.weight});
    const MpLaw scaled = solve_law(SpectralMeasure(atoms), 0.3);
    ASSERT_EQ(scaled.edges.size(), law.edges.size());
    for (std::size_t k = 0; k < law.edges.size(); ++k) {
      EXPECT_NEAR(scaled.edges[k], c * law.edges[k], 1e-9 * std::max(1.0, c * law.edges[k]));
    }
  }
}

TEST(SolveLaw, TwoSeparatedAtoms) {
  const MpLaw law = solve_law(SpectralMeasure({{8.0, 0.5}, {1.0, 0.5}}), 0.5);
  ASSERT_EQ(law.p(), 2u);
  // Roots of the numerator polynomial of f', solved symbolically.
  const double oracle[4] = {18.272723002691094, 2.3341475019787543, 1.7648918944700124,
                            0.12823760086013925};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(law.edges[k], oracle[k], 1e-9);
  const double xs[4] = {-0.08330462426392556, -0.25374881639095703, -0.608516737865643,
                        -2.4294298214794745};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(law.critical_points[k], xs[k], 1e-9);

  const Vector d = (Vector(600) << Vector::Constant(300, 8.0), Vector::Constant(300, 1.0))
                       .finished();
  const Vector ev = simulated_spectrum(d, 1200, 31);
  for (Eigen::Index i = 0; i < ev.size(); ++i) EXPECT_TRUE(inside_support(law, ev(i), 0.03));
}

TEST(SolveLaw, RejectsPhiOneAndNonPositive) {
  for (double phi : {1.0, 0.0, -0.5}) {
    try {
      single_law(phi);
      FAIL();
    } catch (const Error &e) {
      EXPECT_TRUE(e.code() == Errc::unsupported_regime || e.code() == Errc::input);
    }
  }
  try {
    single_law(1.0);
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), Errc::unsupported_regime);
  }
}

TEST(SolveLaw, ParityAndEdgeReproductionOnRandomMeasures) {
  random::Stream s(99, 0, 7u);
  for (int trial = 0; trial < 60; ++trial) {
    const int n_atoms = 1 + trial % 5;
    std::vector<double> locs;
    for (int i = 0; i < n_atoms; ++i) locs.push_back(0.2 + 10.0 * s.uniform());
    std::sort(locs.begin(), locs.end(), std::greater<>());
    locs.erase(std::unique(locs.begin(), locs.end()), locs.end());
    std::vector<double> w;
    double total = 0.0;
    for (std::size_t i = 0; i < locs.size(); ++i) {
      w.push_back(0.1 + s.uniform());
      total += w.back();
    }
    std::vector<SpectralMeasure::Atom> atoms;
    for (std::size_t i = 0; i < locs.size(); ++i) atoms.push_back({locs[i], w[i] / total});
    double phi = 0.05 + 3.0 * s.uniform();
    if (std::abs(phi - 1.0) < 0.05) phi += 0.1;
    const SpectralMeasure m(atoms);
    const MpLaw law = solve_law(m, phi);
    EXPECT_EQ(law.edges.size() % 2, 0u);
    EXPECT_EQ(law.edges.size(), 2 * law.p());
    for (std::size_t k = 0; k < law.edges.size(); ++k) {
      EXPECT_NEAR(evaluate_f(m, phi, law.critical_points[k]), law.edges[k],
                  1e-10 * std::max(1.0, std::abs(law.edges[k])));
      EXPECT_GE(law.edges[k], 0.0);
      if (!law.degenerate[k]) {
        const double df = evaluate_df(m, phi, law.critical_points[k]);
        EXPECT_LT(std::abs(df), 1e-6 * mp_detail::df_scale(m, phi, law.critical_points[k]));
      }
      if (k > 0) EXPECT_LE(law.edges[k], law.edges[k - 1]);
    }
  }
}

TEST(SolveLaw, SimulationConsistency) {
  struct Case {
    std::vector<SpectralMeasure::Atom> atoms;
    double phi;
  };
  const std::vector<Case> cases = {
      {{{1.0, 1.0}}, 0.25},
      {{{1.0, 1.0}}, 0.5},
      {{{1.0, 1.0}}, 2.0},
      {{{8.0, 0.5}, {1.0, 0.5}}, 0.5},
      {{{4.0, 0.3}, {2.0, 0.3}, {0.5, 0.4}}, 0.3},
  };
  std::uint64_t seed = 500;
  for (const auto &c : cases) {
    const MpLaw law = solve_law(SpectralMeasure(c.atoms), c.phi);
    const Eigen::Index n = 500;
    const auto t = static_cast<Eigen::Index>(std::lround(n / c.phi));
    Vector d(n);
    Eigen::Index pos = 0;
    for (std::size_t i = 0; i < c.atoms.size(); ++i) {
      const Eigen::Index cnt = i + 1 == c.atoms.size()
                                   ? n - pos
                                   : static_cast<Eigen::Index>(std::lround(c.atoms[i].weight * n));
      d.segment(pos, cnt).setConstant(c.atoms[i].s);
      pos += cnt;
    }
    const Vector ev = simulated_spectrum(d, t, ++seed);
    int inside = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) inside += inside_support(law, ev(i), 0.03);
    EXPECT_GE(inside, static_cast<int>(std::ceil(0.99 * ev.size())));
  }
}

TEST(Density, OffSupportIsSmall) {
  const MpLaw law = single_law(0.5);
  const double eta = law.default_eta();
  for (double x : {3.2, 4.0, 0.02}) EXPECT_LT(density(law, x, eta), 1e-3);
}

TEST(Density, MatchesClosedForm) {
  for (double phi : {0.25, 0.5, 2.0}) {
    const MpLaw law = single_law(phi);
    for (int i = 1; i <= 20; ++i) {
      const double x = law.edges[1] + (law.edges[0] - law.edges[1]) * i / 21.0;
      EXPECT_NEAR(density(law, x, 1e-6), closed_form_density(phi, x), 1e-4) << phi << " " << x;
    }
  }
  EXPECT_NEAR(density(single_law(0.5), 1.5, 1e-6), 0.3001054387190354, 1e-4);
}

TEST(Density, IntegratesToBulkMass) {
  for (double phi : {0.25, 0.5, 2.0}) {
    const MpLaw law = single_law(phi);
    const double lo = law.edges[1], hi = law.edges[0];
    const int n = 4000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = lo + (hi - lo) * (i + 0.5) / n;
      sum += density(law, x) * (hi - lo) / n;
    }
    EXPECT_NEAR(sum, std::min(1.0, 1.0 / phi), 0.01);
    const auto masses = bulk_masses(law);
    EXPECT_NEAR(masses[0], std::min(1.0, 1.0 / phi), 1e-6);
  }
  const MpLaw two = solve_law(SpectralMeasure({{8.0, 0.5}, {1.0, 0.5}}), 0.5);
  const auto masses = bulk_masses(two);
  EXPECT_NEAR(masses[0] + masses[1], 1.0, 1e-6);
  EXPECT_NEAR(masses[0], 0.5, 1e-3);
}

TEST(Density, Nonnegative) {
  const MpLaw law = solve_law(SpectralMeasure({{8.0, 0.5}, {1.0, 0.5}}), 0.5);
  for (int i = 0; i < 200; ++i) EXPECT_GE(density(law, 0.1 * i), -1e-12);
}

TEST(TypicalLocations, TopEdgeScaling) {
  const MpLaw law = single_law(0.5);
  const auto g = typical_locations(law, 1000, {1});
  EXPECT_GT(g[0], law.edges[0] - 0.1);
  EXPECT_LT(g[0], law.edges[0]);
  // Brent root of the closed-form tail integral.
  EXPECT_NEAR(g[0], 2.8737728821498028, 1e-6);
}

TEST(TypicalLocations, StrictlyDecreasing) {
  const auto g = typical_locations(single_law(0.5), 1000, {1, 2, 3});
  EXPECT_GT(g[0], g[1]);
  EXPECT_GT(g[1], g[2]);
}

TEST(TypicalLocations, MedianMatchesQuadratureOracle) {
  const auto g = typical_locations(single_law(2.0), 1000, {500, 100});
  EXPECT_NEAR(g[0], 1.6630270339030775, 1e-4);
  EXPECT_NEAR(g[1], 4.190515340425278, 1e-4);
}

TEST(TypicalLocations, RangeError) {
  try {
    typical_locations(single_law(0.5), 100, {51});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), Errc::range);
  }
}

TEST(Regularity, SingleAtomRegular) {
  const auto rep = check_regularity(single_law(0.5), 0.01, 0.01);
  ASSERT_EQ(rep.edges.size(), 2u);
  for (const auto &e : rep.edges) {
    EXPECT_TRUE(e.above_delta);
    EXPECT_TRUE(e.separated);
    EXPECT_TRUE(e.away_from_poles);
  }
  EXPECT_TRUE(rep.all_regular());
  EXPECT_GT(rep.bulks[0].min_density, 0.0);
}

TEST(Regularity, TouchingBulksFailSeparation) {
  // Just above the merge point s_1 = 1.90 (phi = 0.1) the inner gap is ~4e-4.
  const MpLaw law = solve_law(SpectralMeasure({{1.91, 0.5}, {1.0, 0.5}}), 0.1);
  ASSERT_EQ(law.p(), 2u);
  EXPECT_LT(law.edges[1] - law.edges[2], 0.01);
  const auto rep = check_regularity(law, 0.01, 1e-4);
  EXPECT_FALSE(rep.edges[1].separated);
  EXPECT_FALSE(rep.edges[2].separated);
  EXPECT_TRUE(rep.edges[0].separated);
  EXPECT_TRUE(rep.edges[3].separated);
}

TEST(Regularity, DeltaAboveEveryEdge) {
  const MpLaw law = single_law(0.5);
  const auto rep = check_regularity(law, law.edges[0] + 1.0, 0.01);
  for (const auto &e : rep.edges) EXPECT_FALSE(e.above_delta);
}

TEST(Regularity, EmptyInterior) {
  const MpLaw law = single_law(0.5);
  try {
    check_regularity(law, 0.01, 2.0);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), Errc::empty_interior);
  }
}

TEST(Stieltjes, SatisfiesSelfConsistentEquation) {
  const MpLaw law = solve_law(SpectralMeasure({{3.0, 0.4}, {1.0, 0.6}}), 0.7);
  for (std::complex<double> z : {std::complex<double>(1.0, 1e-6), {2.5, 0.1}, {-1.0, 0.5}}) {
    const auto m = stieltjes(law, z);
    EXPECT_GT(m.imag(), 0.0);
    std::complex<double> rhs = -z;
    for (const auto &a : law.measure.atoms()) rhs += law.phi * a.weight * a.s / (1.0 + m * a.s);
    EXPECT_LT(std::abs(1.0 / m - rhs), 1e-9 * std::abs(rhs));
  }
}

TEST(Adapters, SingularScale) {
  EXPECT_DOUBLE_EQ(to_singular_scale(4.0), 2.0);
  EXPECT_DOUBLE_EQ(to_noise_singular_value(4.0, 100.0), 20.0);
}
