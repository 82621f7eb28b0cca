#ifndef FOPCA_PANEL_HPP_
#define FOPCA_PANEL_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "fopca/error.hpp"
#include "fopca/linalg.hpp"

namespace fopca {

/// Observed N x T panel: rows are cross-section units, columns are periods.
/// Storage is Eigen's default column-major layout.
class Panel {
 public:
  Panel() = default;

  explicit Panel(Matrix data) : data_(std::move(data)) {
    if (data_.rows() < 1 || data_.cols() < 1) {
      throw Error(Errc::dimension, "panel must have N >= 1 and T >= 1");
    }
    if (!data_.allFinite()) {
      throw Error(Errc::input, "panel contains non-finite entries");
    }
  }

  const Matrix &data() const noexcept { return data_; }
  Eigen::Index n_rows() const noexcept { return data_.rows(); }
  Eigen::Index n_cols() const noexcept { return data_.cols(); }
  /// Aspect ratio phi = N / T.
  double phi() const noexcept {
    return static_cast<double>(data_.rows()) / static_cast<double>(data_.cols());
  }

 private:
  Matrix data_;
};

/// Known generating structure X = B F' + U of a synthetic panel.
struct FactorStructure {
  Matrix loadings;              // B, N x r
  Matrix factors;               // F, T x r
  std::optional<Matrix> noise;  // U, N x T

  FactorStructure() = default;
  FactorStructure(Matrix b, Matrix f, std::optional<Matrix> u = std::nullopt)
      : loadings(std::move(b)), factors(std::move(f)), noise(std::move(u)) {
    if (loadings.cols() != factors.cols()) {
      throw Error(Errc::dimension, "B and F must have the same number of columns");
    }
    if (noise && (noise->rows() != loadings.rows() ||
                  noise->cols() != factors.rows())) {
      throw Error(Errc::dimension, "U must be N x T");
    }
  }

  Eigen::Index rank() const noexcept { return loadings.cols(); }
  Eigen::Index n() const noexcept { return loadings.rows(); }
  Eigen::Index t() const noexcept { return factors.rows(); }

  /// M = B F' (zero when r = 0).
  Matrix signal() const {
    if (rank() == 0) return Matrix::Zero(n(), t());
    return loadings * factors.transpose();
  }

  const Matrix &require_noise() const {
    if (!noise) {
      throw Error(Errc::requires_synthetic,
                  "this diagnostic needs the noise matrix U of a synthetic panel");
    }
    return *noise;
  }

  /// X = B F' + U; needs U.
  Panel panel() const { return Panel(signal() + require_noise()); }
};

/// Top-k singular triple. Columns of `left` have their largest-magnitude entry
/// positive so the output does not depend on the backend's sign choices.
struct SvdTriple {
  Matrix left;             // N x k
  Vector singular_values;  // k, nonincreasing
  Matrix right;            // T x k

  Eigen::Index k() const noexcept { return singular_values.size(); }
};

/// Top-k singular triple of an arbitrary dense matrix.
inline SvdTriple svd_top(const Eigen::Ref<const Matrix> &x, Eigen::Index k) {
  const Eigen::Index lim = std::min(x.rows(), x.cols());
  if (k < 1 || k > lim) {
    throw Error(Errc::dimension, "k = " + std::to_string(k) +
                                     " outside [1, min(N, T) = " +
                                     std::to_string(lim) + "]");
  }
  if (!x.allFinite()) throw Error(Errc::input, "matrix has non-finite entries");
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw Error(Errc::numeric, "SVD did not converge");
  }
  SvdTriple out;
  out.left = svd.matrixU().leftCols(k);
  out.right = svd.matrixV().leftCols(k);
  out.singular_values = svd.singularValues().head(k);
  linalg::apply_sign_convention(out.left, out.right);
  return out;
}

inline SvdTriple svd_top(const Panel &x, Eigen::Index k) {
  return svd_top(x.data(), k);
}

/// (I - P_{1_T}) A: subtracts column means.
inline Matrix demean_columns(const Eigen::Ref<const Matrix> &a) {
  if (a.rows() < 2) {
    throw Error(Errc::input, "demeaning needs at least two rows");
  }
  Matrix out = a;
  out.rowwise() -= a.colwise().mean();
  return out;
}

/// Rotations tying (B, F) to the singular vectors of M = B F'.
struct CanonicalRotation {
  Matrix h_b;  // r x r
  Matrix h_f;  // r x r
  Vector j;    // shared eigenvalues, nonincreasing
  bool tie_warning = false;
};

// Relative eigenvalue gap below which canonical_normalization warns of a tie.
inline constexpr double kEigenTieTolerance = 1e-8;

/// Builds H_B = S_B^{-1/2} G_B and H_F = S_f^{-1/2} G_F so that
/// N^{-1/2} B H_B and T^{-1/2} F H_F are the singular vectors of B F' and
/// (H_F' H_B)^{-1} = (NT)^{-1/2} L_r.
inline CanonicalRotation canonical_normalization(const Eigen::Ref<const Matrix> &b,
                                                 const Eigen::Ref<const Matrix> &f) {
  const Eigen::Index r = b.cols();
  if (r < 1) throw Error(Errc::dimension, "canonical normalization needs r >= 1");
  if (f.cols() != r) throw Error(Errc::dimension, "B and F column counts differ");
  const double n = static_cast<double>(b.rows());
  const double t = static_cast<double>(f.rows());

  const Matrix s_b = b.transpose() * b / n;
  const Matrix s_f = f.transpose() * f / t;
  const auto root_b = linalg::symmetric_roots(s_b, "S_B");
  const auto root_f = linalg::symmetric_roots(s_f, "S_f");

  auto sorted_eigen = [](const Matrix &sym) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig((sym + sym.transpose()) / 2.0);
    if (eig.info() != Eigen::Success) {
      throw Error(Errc::numeric, "eigendecomposition failed");
    }
    // Descending order; the solver returns ascending.
    return std::pair<Vector, Matrix>(eig.eigenvalues().reverse(),
                                     eig.eigenvectors().rowwise().reverse());
  };

  auto [j, g_b] = sorted_eigen(root_b.sqrt * s_f * root_b.sqrt);
  auto [j_f, g_f] = sorted_eigen(root_f.sqrt * s_b * root_f.sqrt);
  (void)j_f;

  CanonicalRotation out;
  for (Eigen::Index k = 0; k + 1 < r; ++k) {
    if (j(k) - j(k + 1) < kEigenTieTolerance * std::abs(j(0))) {
      out.tie_warning = true;
    }
  }

  out.h_b = root_b.inv_sqrt * g_b;
  const Matrix xi = b * out.h_b / std::sqrt(n);
  for (Eigen::Index k = 0; k < r; ++k) {
    Eigen::Index arg = 0;
    xi.col(k).cwiseAbs().maxCoeff(&arg);
    if (xi(arg, k) < 0.0) out.h_b.col(k) *= -1.0;
  }

  out.h_f = root_f.inv_sqrt * g_f;
  // Pair the factor-side eigenvectors with the loading side: under distinct
  // eigenvalues H_F' H_B is diagonal, and its diagonal must be positive.
  const Matrix cross = out.h_f.transpose() * out.h_b;
  for (Eigen::Index k = 0; k < r; ++k) {
    if (cross(k, k) < 0.0) out.h_f.col(k) *= -1.0;
  }
  out.j = j;
  return out;
}

}  // namespace fopca

#endif  // FOPCA_PANEL_HPP_
