#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace fopca;
using testutil::gaussian;
using testutil::gaussian_vector;

namespace {

Matrix with_intercept(const Matrix &f_hat) {
  Matrix w(f_hat.rows(), f_hat.cols() + 1);
  w.col(0).setOnes();
  w.rightCols(f_hat.cols()) = f_hat;
  return w;
}

// Just-identified 2SLS coefficient on g by explicit normal equations:
// regressors [1, F_hat, g], instruments [1, F_hat, z].
double oracle_2sls(const Vector &y, const Vector &g, const Vector &z, const Matrix &f_hat) {
  const Matrix w = with_intercept(f_hat);
  Matrix xr(w.rows(), w.cols() + 1), zr(w.rows(), w.cols() + 1);
  xr << w, g;
  zr << w, z;
  const Vector coef = (zr.transpose() * xr).fullPivLu().solve(zr.transpose() * y);
  return coef(coef.size() - 1);
}

// Long OLS regression of y on [1, F_hat, g], via normal equations.
double oracle_long_ols(const Vector &y, const Vector &g, const Matrix &f_hat) {
  const Matrix w = with_intercept(f_hat);
  Matrix xr(w.rows(), w.cols() + 1);
  xr << w, g;
  const Vector coef = (xr.transpose() * xr).ldlt().solve(xr.transpose() * y);
  return coef(coef.size() - 1);
}

DgpConfig section_design(EstimatorMode mode) {
  DgpConfig c;
  c.n = 100;
  c.t = 200;
  c.r = 2;
  c.beta = 0.0;
  c.mode = mode;
  c.seed = 31337;
  return c;
}

}  // namespace

TEST(Residualize, InterceptOnlyIsDemeaning) {
  const Vector a = gaussian_vector(12, 1);
  const Vector r = residualize(a, Matrix(12, 0));
  EXPECT_LT((r - demean_columns(a)).norm(), 1e-14);
}

TEST(Residualize, AnnihilatesSpan) {
  const Matrix f = gaussian(30, 3, 2);
  const Vector a = 2.0 * Vector::Ones(30) + f * Eigen::Vector3d(1.0, -0.5, 3.0);
  EXPECT_LT(residualize(a, f).norm(), 1e-9);
}

TEST(Residualize, MatchesNormalEquations) {
  const Matrix f = gaussian(50, 3, 3);
  const Vector a = gaussian_vector(50, 4);
  const Matrix w = with_intercept(f);
  const Vector oracle = a - w * (w.transpose() * w).ldlt().solve(w.transpose() * a);
  const Vector r = residualize(a, f);
  EXPECT_LT((r - oracle).norm(), 1e-9);
  EXPECT_LT((w.transpose() * r).norm(), 1e-9 * a.norm());
}

TEST(Residualize, DropsCollinearColumns) {
  Matrix f = gaussian(20, 3, 5);
  f.col(2) = f.col(0) - 2.0 * f.col(1);
  const FactorProjector p(f);
  EXPECT_EQ(p.rank(), 3);
  EXPECT_EQ(p.dropped(), 1);
  const Vector a = gaussian_vector(20, 6);
  EXPECT_LT((with_intercept(f).transpose() * p.residualize(a)).norm(), 1e-9);
}

TEST(Residualize, DegreesOfFreedom) {
  try {
    residualize(gaussian_vector(4, 1), gaussian(4, 3, 2));
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), Errc::degrees_of_freedom);
  }
}

TEST(Hc0, HandComputedFourPoints) {
  Vector e(4);
  e << 1, -1, 1, -1;  // mean zero, variance 1 (divisor T)
  const double c = 0.7;
  EXPECT_NEAR(hc0_sandwich(e, e, Vector::Constant(4, c)), c, 1e-12);
  const SandwichParts p = hc0_parts(e, e, Vector::Constant(4, c));
  EXPECT_NEAR(p.sigma2, c * c / 1.0, 1e-12);
}

TEST(Hc0, ZeroEtaAndZeroBread) {
  Vector e(4);
  e << 1, -1, 1, -1;
  EXPECT_EQ(hc0_sandwich(e, e, Vector::Zero(4)), 0.0);
  Vector o(4);
  o << 1, 1, -1, -1;
  try {
    hc0_sandwich(e, o, Vector::Ones(4));
    FAIL();
  } catch (const Error &ex) {
    EXPECT_EQ(ex.code(), Errc::singularity);
  }
}

TEST(Hc0, PopulationMoments) {
  // eps_z, v, eta i.i.d. N(0,1); eps_g = eps_z + v. sigma^2 = E[z^2]^-2 E[z^2 eta^2] = 1.
  const Eigen::Index t = 10000;
  const Vector ez = gaussian_vector(t, 1, 1);
  const Vector eg = ez + gaussian_vector(t, 1, 2);
  const Vector eta = gaussian_vector(t, 1, 3);
  const double s = hc0_sandwich(ez, eg, eta);
  EXPECT_NEAR(s * s, 1.0, 0.05);
}

TEST(IvEstimate, ExactFitIsDegenerateVariance) {
  const Eigen::Index t = 40;
  const Vector g = gaussian_vector(t, 7);
  const Vector y = 1.5 * g;
  const RegressionData d = RegressionData::ols(y, g, Panel(gaussian(10, t, 8)));
  try {
    iv_estimate(d, 0);
    FAIL();
  } catch (const InferenceError &e) {
    EXPECT_EQ(e.code(), Errc::singular_variance);
    EXPECT_NEAR(e.partial().beta_hat, 1.5, 1e-10);
  }
}

TEST(IvEstimate, WeakInstrumentCarriesFirstStage) {
  const Eigen::Index t = 60;
  const Vector g = gaussian_vector(t, 1);
  const Vector y = gaussian_vector(t, 2);
  Vector z = gaussian_vector(t, 3);
  Matrix w(t, 2);
  w.col(0).setOnes();
  w.col(1) = g;
  z -= w * (w.transpose() * w).ldlt().solve(w.transpose() * z);
  const RegressionData d(y, g, z, Panel(gaussian(10, t, 4)));
  try {
    iv_estimate(d, 0);
    FAIL();
  } catch (const InferenceError &e) {
    EXPECT_EQ(e.code(), Errc::weak_instrument);
    EXPECT_TRUE(std::isfinite(e.partial().first_stage_t));
    EXPECT_LT(std::abs(e.partial().first_stage_t), 1e-6);
  }
}

TEST(IvEstimate, MatchesExplicit2slsOracle) {
  const SyntheticDraw d = generate(section_design(EstimatorMode::iv), 0);
  const InferenceResult res = iv_estimate(d.data, 3);
  const PcaFit f = fit(d.data.panel, 3);
  EXPECT_NEAR(res.beta_hat, oracle_2sls(d.data.y, d.data.g, d.data.z, f.f_hat), 1e-9);
  EXPECT_EQ(res.r_used, 3);
  EXPECT_TRUE(std::isfinite(res.first_stage_t));
  EXPECT_GT(std::abs(res.first_stage_t), 5.0);
  EXPECT_NEAR(res.se, res.sigma_hat / std::sqrt(200.0), 1e-15);
  EXPECT_NEAR(res.t_stat, res.beta_hat / res.se, 1e-12);
}

TEST(IvEstimate, OlsMatchesFrischWaughLovell) {
  const SyntheticDraw d = generate(section_design(EstimatorMode::ols), 0);
  const InferenceResult res = iv_estimate(d.data, 3);
  const PcaFit f = fit(d.data.panel, 3);
  const Vector ey = residualize(d.data.y, f.f_hat);
  const Vector eg = residualize(d.data.g, f.f_hat);
  EXPECT_NEAR(res.beta_hat, eg.dot(ey) / eg.dot(eg), 1e-9);
  EXPECT_NEAR(res.beta_hat, oracle_long_ols(d.data.y, d.data.g, f.f_hat), 1e-9);
  EXPECT_TRUE(std::isnan(res.first_stage_t));
}

TEST(IvEstimate, RangeErrors) {
  const SyntheticDraw d = generate(section_design(EstimatorMode::ols), 1);
  EXPECT_THROW(iv_estimate(d.data, 101), Error);
  EXPECT_THROW(iv_estimate(d.data, -1), Error);
  RegressionData small = RegressionData::ols(gaussian_vector(5, 1), gaussian_vector(5, 2),
                                             Panel(gaussian(10, 5, 3)));
  try {
    iv_estimate(small, 4);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), Errc::degrees_of_freedom);
  }
}

TEST(IvEstimate, ScaleEquivarianceAndInstrumentSign) {
  const SyntheticDraw d = generate(section_design(EstimatorMode::iv), 2);
  const InferenceResult base = iv_estimate(d.data, 3);
  RegressionData scaled = d.data;
  scaled.y *= -3.5;
  const InferenceResult s = iv_estimate(scaled, 3);
  EXPECT_NEAR(s.beta_hat, -3.5 * base.beta_hat, 1e-9 * std::max(1.0, std::abs(base.beta_hat)));
  EXPECT_NEAR(s.t_stat, -base.t_stat, 1e-9 * std::max(1.0, std::abs(base.t_stat)));
  RegressionData flipped = d.data;
  flipped.z = -flipped.z;
  const InferenceResult f = iv_estimate(flipped, 3);
  EXPECT_NEAR(f.beta_hat, base.beta_hat, 1e-12);
  EXPECT_NEAR(f.sigma_hat, base.sigma_hat, 1e-12);
}

TEST(IvEstimate, ResidualNormNonincreasingInR) {
  const SyntheticDraw d = generate(section_design(EstimatorMode::ols), 3);
  const PcaFit f = fit(d.data.panel, 20, FitOptions{.compute_m_hat = false});
  double prev = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r <= 20; ++r) {
    const double norm = residualize(d.data.y, f.f_hat.leftCols(r)).norm();
    EXPECT_LE(norm, prev + 1e-10);
    prev = norm;
  }
}

TEST(IvEstimate, ProfileMatchesSingleEstimates) {
  const SyntheticDraw d = generate(section_design(EstimatorMode::iv), 4);
  const auto prof = iv_profile(d.data, {1, 2, 3});
  ASSERT_EQ(prof.size(), 3u);
  for (Eigen::Index r = 1; r <= 3; ++r) {
    EXPECT_EQ(prof[r - 1].beta_hat, iv_estimate(d.data, r).beta_hat);
  }
}

TEST(IvEstimate, ExtraComponentsMatterLessAsTGrows) {
  std::vector<std::pair<double, double>> pts;
  for (Eigen::Index t : {100, 200, 400, 800}) {
    DgpConfig c;
    c.n = t / 2;
    c.t = t;
    c.r = 2;
    c.seed = 404;
    std::vector<double> diffs;
    for (std::uint32_t rep = 0; rep < 40; ++rep) {
      const SyntheticDraw d = generate(c, rep);
      const auto prof = iv_profile(d.data, {2, 5});
      diffs.push_back(std::abs(prof[1].beta_hat - prof[0].beta_hat));
    }
    pts.emplace_back(static_cast<double>(t), testutil::median(diffs));
  }
  EXPECT_LT(rate_regression(pts).slope, 0.0);
}
