#ifndef FOPCA_INFERENCE_HPP_
#define FOPCA_INFERENCE_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fopca/error.hpp"
#include "fopca/linalg.hpp"
#include "fopca/panel.hpp"
#include "fopca/pca.hpp"

namespace fopca {

/// Outcome y, treatment g and instrument z (z = g for OLS) observed over the
/// same T periods as the control panel.
struct RegressionData {
  Vector y;
  Vector g;
  Vector z;
  Panel panel;

  RegressionData() = default;
  RegressionData(Vector y_, Vector g_, Vector z_, Panel panel_)
      : y(std::move(y_)), g(std::move(g_)), z(std::move(z_)), panel(std::move(panel_)) {
    const Eigen::Index t = panel.n_cols();
    if (y.size() != t || g.size() != t || z.size() != t) {
      throw Error(Errc::dimension, "y, g and z must have length T = " + std::to_string(t));
    }
    if (!y.allFinite() || !g.allFinite() || !z.allFinite()) {
      throw Error(Errc::input, "y, g and z must be finite");
    }
  }

  /// OLS specialization: the treatment instruments itself.
  static RegressionData ols(Vector y, Vector g, Panel panel) {
    Vector z = g;
    return RegressionData(std::move(y), std::move(g), std::move(z), std::move(panel));
  }

  Eigen::Index t() const noexcept { return y.size(); }
};

struct InferenceResult {
  double beta_hat = std::numeric_limits<double>::quiet_NaN();
  double sigma_hat = std::numeric_limits<double>::quiet_NaN();  // HC0, sqrt(T) scale
  double se = std::numeric_limits<double>::quiet_NaN();         // sigma_hat / sqrt(T)
  double t_stat = std::numeric_limits<double>::quiet_NaN();     // beta_hat / se
  double first_stage_t = std::numeric_limits<double>::quiet_NaN();
  double gamma_hat = std::numeric_limits<double>::quiet_NaN();  // eps_z' eps_g / T
  Eigen::Index r_used = 0;
  Eigen::Index t = 0;
  std::vector<std::string> warnings;

  /// sqrt(T) (beta_hat - beta) / sigma_hat, the simulator's statistic.
  double centered_t(double beta) const {
    return std::sqrt(static_cast<double>(t)) * (beta_hat - beta) / sigma_hat;
  }
};

/// Inference failure that still carries what could be computed.
class InferenceError : public Error {
 public:
  InferenceError(Errc code, const std::string &what, InferenceResult partial)
      : Error(code, what), partial_(std::move(partial)) {}
  const InferenceResult &partial() const noexcept { return partial_; }

 private:
  InferenceResult partial_;
};

inline constexpr double kRelevanceTolerance = 1e-10;

/// Orthogonal projector off span{1_T, F_hat}. Built by a column-pivoted QR;
/// columns that are numerically collinear with earlier ones are dropped.
class FactorProjector {
 public:
  explicit FactorProjector(const Eigen::Ref<const Matrix> &f_hat)
      : FactorProjector(f_hat.rows(), f_hat) {}

  FactorProjector(Eigen::Index t, const Eigen::Ref<const Matrix> &f_hat) {
    const Eigen::Index r = f_hat.cols();
    if (r > 0 && f_hat.rows() != t) {
      throw Error(Errc::dimension, "F_hat must have T rows");
    }
    if (r + 1 >= t) {
      throw Error(Errc::degrees_of_freedom,
                  "R + 1 = " + std::to_string(r + 1) + " regressors leave no residual " +
                      "degrees of freedom with T = " + std::to_string(t));
    }
    Matrix w(t, r + 1);
    w.col(0).setOnes();
    if (r > 0) w.rightCols(r) = f_hat;
    Eigen::ColPivHouseholderQR<Matrix> qr(w);
    qr.setThreshold(kRankTolerance);
    rank_ = qr.rank();
    dropped_ = (r + 1) - rank_;
    basis_ = qr.householderQ() * Matrix::Identity(t, rank_);
  }

  Vector residualize(const Eigen::Ref<const Vector> &a) const {
    if (a.size() != basis_.rows()) throw Error(Errc::dimension, "vector length differs from T");
    return a - basis_ * (basis_.transpose() * a);
  }

  Eigen::Index rank() const noexcept { return rank_; }
  Eigen::Index dropped() const noexcept { return dropped_; }

 private:
  Matrix basis_;
  Eigen::Index rank_ = 0;
  Eigen::Index dropped_ = 0;
};

/// (I - P_[1_T, F_hat]) a.
inline Vector residualize(const Eigen::Ref<const Vector> &a,
                          const Eigen::Ref<const Matrix> &f_hat) {
  return FactorProjector(a.size(), f_hat).residualize(a);
}

struct SandwichParts {
  double bread = 0.0;  // eps_z' eps_g / T
  double meat = 0.0;   // sum eps_z^2 eta^2 / T
  double sigma2 = 0.0;
};

inline SandwichParts hc0_parts(const Eigen::Ref<const Vector> &eps_z,
                               const Eigen::Ref<const Vector> &eps_g,
                               const Eigen::Ref<const Vector> &eta_hat) {
  const Eigen::Index t = eps_z.size();
  if (eps_g.size() != t || eta_hat.size() != t || t == 0) {
    throw Error(Errc::dimension, "sandwich inputs must share one nonzero length");
  }
  const double td = static_cast<double>(t);
  SandwichParts p;
  p.bread = eps_z.dot(eps_g) / td;
  if (p.bread == 0.0) throw Error(Errc::singularity, "sandwich bread eps_z' eps_g is zero");
  p.meat = (eps_z.array().square() * eta_hat.array().square()).sum() / td;
  p.sigma2 = p.meat / (p.bread * p.bread);
  return p;
}

/// HC0 sigma_hat = sqrt((eps_z'eps_g/T)^-1 (T^-1 sum eps_z^2 eta^2) (eps_z'eps_g/T)^-1).
inline double hc0_sandwich(const Eigen::Ref<const Vector> &eps_z,
                           const Eigen::Ref<const Vector> &eps_g,
                           const Eigen::Ref<const Vector> &eta_hat) {
  return std::sqrt(hc0_parts(eps_z, eps_g, eta_hat).sigma2);
}

/// Residualized first stage: HC0 Wald t of eps_g on eps_z. NaN when the
/// first stage fits exactly (e.g. OLS, where z = g).
inline double first_stage_wald(const Vector &eps_z, const Vector &eps_g) {
  const double zz = eps_z.squaredNorm();
  if (zz == 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double pi = eps_z.dot(eps_g) / zz;
  const Vector v = eps_g - pi * eps_z;
  const double td = static_cast<double>(eps_z.size());
  const double meat = (eps_z.array().square() * v.array().square()).sum() / td;
  if (meat <= 1e-24 * (zz / td) * (eps_g.squaredNorm() / td)) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const double var = meat / ((zz / td) * (zz / td));
  return pi / std::sqrt(var / td);
}

/// Just-identified IV slope after partialling [1_T, F_hat] out of y, g and z.
/// F_hat may have zero columns (R = 0).
inline InferenceResult iv_estimate_with_factors(const Eigen::Ref<const Vector> &y,
                                                const Eigen::Ref<const Vector> &g,
                                                const Eigen::Ref<const Vector> &z,
                                                const Eigen::Ref<const Matrix> &f_hat) {
  const Eigen::Index t = y.size();
  if (g.size() != t || z.size() != t) throw Error(Errc::dimension, "y, g, z lengths differ");
  const FactorProjector proj(t, f_hat);
  const Vector ey = proj.residualize(y);
  const Vector eg = proj.residualize(g);
  const Vector ez = proj.residualize(z);
  const double td = static_cast<double>(t);

  InferenceResult out;
  out.r_used = f_hat.cols();
  out.t = t;
  if (proj.dropped() > 0) {
    out.warnings.push_back(std::to_string(proj.dropped()) +
                           " collinear column(s) of [1, F_hat] dropped");
  }
  out.gamma_hat = ez.dot(eg) / td;
  out.first_stage_t = first_stage_wald(ez, eg);
  if (!(std::abs(out.gamma_hat) > kRelevanceTolerance)) {
    out.warnings.push_back("instrument relevance below tolerance");
    throw InferenceError(Errc::weak_instrument,
                         "|eps_z' eps_g / T| = " + std::to_string(std::abs(out.gamma_hat)) +
                             " is below the relevance tolerance",
                         out);
  }
  out.beta_hat = ez.dot(ey) / ez.dot(eg);
  const Vector eta = ey - out.beta_hat * eg;
  const SandwichParts parts = hc0_parts(ez, eg, eta);
  const double scale = (ez.squaredNorm() / td) * (ey.squaredNorm() / td);
  if (!(parts.meat > 1e-24 * scale)) {
    out.sigma_hat = std::sqrt(parts.sigma2);
    out.warnings.push_back("residual variance is degenerate");
    throw InferenceError(Errc::singular_variance,
                         "HC0 meat term is numerically zero (exact fit)", out);
  }
  out.sigma_hat = std::sqrt(parts.sigma2);
  out.se = out.sigma_hat / std::sqrt(td);
  out.t_stat = out.beta_hat / out.se;
  return out;
}

inline void check_working_dim(const Panel &x, Eigen::Index working_dim) {
  const Eigen::Index lim = std::min(x.n_rows(), x.n_cols());
  if (working_dim < 0 || working_dim > lim) {
    throw Error(Errc::dimension, "working dimension R = " + std::to_string(working_dim) +
                                     " outside [0, min(N, T) = " + std::to_string(lim) + "]");
  }
}

/// Factor-augmented IV (or OLS when z = g) estimate with working dimension R.
inline InferenceResult iv_estimate(const RegressionData &data, Eigen::Index working_dim) {
  check_working_dim(data.panel, working_dim);
  if (working_dim + 1 >= data.t()) {
    throw Error(Errc::degrees_of_freedom, "R + 1 >= T leaves no residual degrees of freedom");
  }
  if (working_dim == 0) {
    return iv_estimate_with_factors(data.y, data.g, data.z, Matrix(data.t(), 0));
  }
  const PcaFit f = fit(data.panel, working_dim, FitOptions{.compute_m_hat = false});
  return iv_estimate_with_factors(data.y, data.g, data.z, f.f_hat);
}

/// Estimates for several working dimensions from a single SVD; F_hat for each
/// R is the leading R columns of the fit at max(R). Results follow `dims`.
/// Failed estimates are returned as the partial result with a warning.
inline std::vector<InferenceResult> iv_profile(const RegressionData &data,
                                               const std::vector<Eigen::Index> &dims) {
  Eigen::Index top = 0;
  for (auto r : dims) {
    check_working_dim(data.panel, r);
    top = std::max(top, r);
  }
  Matrix f_hat(data.t(), 0);
  if (top > 0) f_hat = fit(data.panel, top, FitOptions{.compute_m_hat = false}).f_hat;
  std::vector<InferenceResult> out;
  for (auto r : dims) {
    if (r + 1 >= data.t()) {
      throw Error(Errc::degrees_of_freedom, "R + 1 >= T leaves no residual degrees of freedom");
    }
    try {
      out.push_back(iv_estimate_with_factors(data.y, data.g, data.z, f_hat.leftCols(r)));
    } catch (const InferenceError &e) {
      InferenceResult partial = e.partial();
      partial.warnings.push_back(e.what());
      out.push_back(std::move(partial));
    }
  }
  return out;
}

}  // namespace fopca

#endif  // FOPCA_INFERENCE_HPP_
