#ifndef FOPCA_PCA_HPP_
#define FOPCA_PCA_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "fopca/error.hpp"
#include "fopca/linalg.hpp"
#include "fopca/panel.hpp"

namespace fopca {

/// Fixed-order PCA fit with working dimension R.
///
/// With the top-R triple (Xi, L, V) of X:
///   b_hat   = sqrt(N) Xi                 (N x R)
///   f_hat   = V L / sqrt(N) = X' b_hat / N (T x R)
///   m_hat   = Xi L V'                     (N x T)
///   s_f_hat = L^2 / (T N)                 (R x R)
struct PcaFit {
  SvdTriple triple;
  Matrix b_hat;
  Matrix f_hat;
  Matrix m_hat;
  Matrix s_f_hat;
  Eigen::Index working_dim = 0;

  Eigen::Index n() const noexcept { return b_hat.rows(); }
  Eigen::Index t() const noexcept { return f_hat.rows(); }
};

struct FitOptions {
  // The N x T low-rank estimate is skipped in hot loops that never read it.
  bool compute_m_hat = true;
};

/// Assembles the estimators from an already computed top-R triple.
inline PcaFit fit_from_triple(SvdTriple triple, Eigen::Index n, Eigen::Index t,
                              FitOptions options = {}) {
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  PcaFit out;
  out.working_dim = triple.k();
  out.b_hat = sqrt_n * triple.left;
  out.f_hat = triple.right * triple.singular_values.asDiagonal() / sqrt_n;
  if (options.compute_m_hat) {
    out.m_hat = triple.left * triple.singular_values.asDiagonal() *
                triple.right.transpose();
  }
  out.s_f_hat = Matrix(triple.singular_values.array().square().matrix().asDiagonal()) /
                (static_cast<double>(t) * static_cast<double>(n));
  out.triple = std::move(triple);
  return out;
}

inline PcaFit fit(const Panel &x, Eigen::Index working_dim, FitOptions options = {}) {
  const Eigen::Index lim = std::min(x.n_rows(), x.n_cols());
  if (working_dim < 1 || working_dim > lim) {
    throw Error(Errc::dimension, "working dimension R = " +
                                     std::to_string(working_dim) +
                                     " outside [1, min(N, T) = " +
                                     std::to_string(lim) + "]");
  }
  return fit_from_triple(svd_top(x, working_dim), x.n_rows(), x.n_cols(), options);
}

/// Partition of a fit into the leading r ("spiked") and trailing R - r
/// ("extra") singular components. Holds a reference to the fit; the blocks
/// are views.
class SplitFit {
 public:
  SplitFit(const PcaFit &fit, Eigen::Index assumed_rank)
      : fit_(&fit), r_(assumed_rank) {}

  Eigen::Index assumed_rank() const noexcept { return r_; }
  Eigen::Index extra_count() const noexcept { return fit_->working_dim - r_; }

  auto spiked_left() const { return fit_->triple.left.leftCols(r_); }
  auto spiked_right() const { return fit_->triple.right.leftCols(r_); }
  auto spiked_values() const { return fit_->triple.singular_values.head(r_); }
  auto extra_left() const { return fit_->triple.left.rightCols(extra_count()); }
  auto extra_right() const { return fit_->triple.right.rightCols(extra_count()); }
  auto extra_values() const { return fit_->triple.singular_values.tail(extra_count()); }

 private:
  const PcaFit *fit_;
  Eigen::Index r_;
};

inline SplitFit split(const PcaFit &fit, Eigen::Index r) {
  if (r < 0 || r > fit.working_dim) {
    throw Error(Errc::dimension, "assumed rank r = " + std::to_string(r) +
                                     " outside [0, R = " +
                                     std::to_string(fit.working_dim) + "]");
  }
  return SplitFit(fit, r);
}

/// Expanded rotation H (R x r, so H' = B' b_hat / N is r x R) and its
/// compressed counterpart H+ = (H H')^+ H.
struct RotationPair {
  Matrix h;       // R x r
  Matrix h_plus;  // R x r
  double smallest_singular = 0.0;
  bool degenerate = false;
};

inline RotationPair expanded_rotation(const Eigen::Ref<const Matrix> &b,
                                      const PcaFit &fit) {
  if (b.cols() < 1) {
    throw Error(Errc::dimension, "expanded rotation needs r >= 1 loading columns");
  }
  if (b.rows() != fit.n()) {
    throw Error(Errc::dimension, "B has " + std::to_string(b.rows()) +
                                     " rows but the fit has N = " +
                                     std::to_string(fit.n()));
  }
  const double n = static_cast<double>(fit.n());
  RotationPair out;
  out.h = fit.b_hat.transpose() * b / n;

  const Vector s = linalg::singular_values(out.h);
  const Eigen::Index r = b.cols();
  out.smallest_singular = r <= s.size() ? s(r - 1) : 0.0;
  const double top = s.size() > 0 ? s(0) : 0.0;
  out.degenerate = r > s.size() || top <= 0.0 ||
                   out.smallest_singular <= kRankTolerance * top;

  const Matrix hht = out.h * out.h.transpose();
  out.h_plus = linalg::pseudo_inverse(hht) * out.h;
  return out;
}

/// H+ of a non-degenerate pair; H' H+ = I_r.
inline Matrix compressed_rotation(const RotationPair &pair) {
  if (pair.degenerate) {
    throw Error(Errc::singularity, "rotation H is degenerate: lambda_r(H) = " +
                                       std::to_string(pair.smallest_singular));
  }
  return pair.h_plus;
}

/// Factor-space alignment of a fit against known (B, F). Only computable on
/// synthetic data, since H depends on the unobservable loadings.
struct AlignmentReport {
  static constexpr bool requires_truth = true;

  bool empty = false;       // r = 0: no rotation exists
  bool degenerate = false;  // lambda_r(H) under the rank tolerance
  double expanded_error = 0.0;        // ||F_hat - F H'|| / sqrt(T)
  double expanded_cross = 0.0;        // ||F'(F_hat - F H')|| / T
  double compressed_error = 0.0;      // ||F_hat H+ - F|| / sqrt(T)
  double compressed_cross = 0.0;      // ||F'(F_hat H+ - F)|| / T
  double sandwich_discrepancy = 0.0;  // ||H'(F_hat'F_hat/T)^-1 H - (F'F/T)^-1||
  double smallest_singular = 0.0;
};

inline AlignmentReport factor_alignment(const PcaFit &fit,
                                        const FactorStructure &truth) {
  AlignmentReport out;
  if (truth.rank() == 0) {
    out.empty = true;
    return out;
  }
  if (truth.t() != fit.t() || truth.n() != fit.n()) {
    throw Error(Errc::dimension, "truth is not paired with the fitted panel");
  }
  const RotationPair pair = expanded_rotation(truth.loadings, fit);
  out.smallest_singular = pair.smallest_singular;
  const double t = static_cast<double>(fit.t());
  const Matrix &f = truth.factors;

  const Matrix expanded = fit.f_hat - f * pair.h.transpose();
  out.expanded_error = linalg::spectral_norm(expanded) / std::sqrt(t);
  out.expanded_cross = linalg::spectral_norm(f.transpose() * expanded) / t;

  if (pair.degenerate) {
    out.degenerate = true;
    return out;
  }
  const Matrix compressed = fit.f_hat * pair.h_plus - f;
  out.compressed_error = linalg::spectral_norm(compressed) / std::sqrt(t);
  out.compressed_cross = linalg::spectral_norm(f.transpose() * compressed) / t;

  const Matrix fhat_cov = fit.f_hat.transpose() * fit.f_hat / t;
  const Matrix f_cov = f.transpose() * f / t;
  const Matrix sandwich =
      pair.h.transpose() * linalg::pseudo_inverse(fhat_cov) * pair.h -
      linalg::pseudo_inverse(f_cov);
  out.sandwich_discrepancy = linalg::spectral_norm(sandwich);
  return out;
}

}  // namespace fopca

#endif  // FOPCA_PCA_HPP_
