#ifndef FOPCA_LINALG_HPP_
#define FOPCA_LINALG_HPP_

#include <Eigen/Dense>

#include <cmath>

#include "fopca/error.hpp"

namespace fopca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Singular values below kRankTolerance * (largest singular value) count as zero.
inline constexpr double kRankTolerance = 1e-12;

namespace linalg {

inline bool all_finite(const Eigen::Ref<const Matrix> &a) {
  return a.allFinite();
}

/// Operator (spectral) norm. Empty matrices have norm zero.
inline double spectral_norm(const Eigen::Ref<const Matrix> &a) {
  if (a.size() == 0) return 0.0;
  if (a.rows() == 1 || a.cols() == 1) return a.norm();
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

/// Nonincreasing singular values of `a` (min(rows, cols) of them).
inline Vector singular_values(const Eigen::Ref<const Matrix> &a) {
  if (a.size() == 0) return Vector();
  Eigen::BDCSVD<Matrix> svd(a);
  return svd.singularValues();
}

/// Flips the sign of column pairs so that, in every column of `left`, the
/// entry of largest magnitude is positive. Ties go to the lowest row index.
inline void apply_sign_convention(Matrix &left, Matrix &right) {
  for (Eigen::Index k = 0; k < left.cols(); ++k) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < left.rows(); ++i) {
      const double v = std::abs(left(i, k));
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    if (left(arg, k) < 0.0) {
      left.col(k) *= -1.0;
      if (k < right.cols()) right.col(k) *= -1.0;
    }
  }
}

/// Moore-Penrose inverse through an SVD, zeroing singular values below
/// `rel_tol` times the largest one.
inline Matrix pseudo_inverse(const Eigen::Ref<const Matrix> &a,
                             double rel_tol = kRankTolerance) {
  if (a.size() == 0) return Matrix::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector &s = svd.singularValues();
  const double cut = s.size() > 0 ? rel_tol * s(0) : 0.0;
  Vector inv = Vector::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut && s(i) > 0.0) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Numerical rank under the library-wide tolerance.
inline Eigen::Index numerical_rank(const Eigen::Ref<const Matrix> &a,
                                   double rel_tol = kRankTolerance) {
  const Vector s = singular_values(a);
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++rank;
  }
  return rank;
}

struct SymmetricRoots {
  Matrix sqrt;
  Matrix inv_sqrt;
  Vector eigenvalues;  // ascending, as returned by the solver
};

/// Square root and inverse square root of a symmetric positive definite
/// matrix. Throws a rank error when it is singular under the tolerance.
inline SymmetricRoots symmetric_roots(const Eigen::Ref<const Matrix> &a,
                                      const char *name) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
  if (eig.info() != Eigen::Success) {
    throw Error(Errc::numeric, std::string("eigendecomposition of ") + name +
                                   " failed");
  }
  const Vector &ev = eig.eigenvalues();
  const double top = ev.size() > 0 ? ev(ev.size() - 1) : 0.0;
  if (ev.size() == 0 || top <= 0.0 || ev(0) <= kRankTolerance * top) {
    throw Error(Errc::rank, std::string(name) + " is singular");
  }
  const Vector root = ev.array().sqrt();
  SymmetricRoots out;
  out.sqrt = eig.eigenvectors() * root.asDiagonal() *
             eig.eigenvectors().transpose();
  out.inv_sqrt = eig.eigenvectors() * root.cwiseInverse().asDiagonal() *
                 eig.eigenvectors().transpose();
  out.eigenvalues = ev;
  return out;
}

}  // namespace linalg
}  // namespace fopca

#endif  // FOPCA_LINALG_HPP_
