#ifndef FOPCA_DIAGNOSTICS_HPP_
#define FOPCA_DIAGNOSTICS_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "fopca/error.hpp"
#include "fopca/linalg.hpp"
#include "fopca/panel.hpp"
#include "fopca/pca.hpp"
#include "fopca/random.hpp"

namespace fopca {

/// Unit probe vectors on the cross-section (left, N x m) and time (right,
/// T x m) sides. They must not depend on the noise of the panel probed.
struct ProbeSet {
  Matrix left;
  Matrix right;

  /// First `count` canonical basis vectors plus `count` Gaussian unit vectors
  /// per side. The Gaussian ones come from dedicated substreams, so they are
  /// independent of any noise drawn from the same seed.
  static ProbeSet standard(Eigen::Index n, Eigen::Index t, std::uint64_t seed,
                           std::uint32_t replication = 0, Eigen::Index count = 10) {
    ProbeSet p;
    p.left = make(n, count, random::Stream(seed, replication, random::Substream::probes_left));
    p.right = make(t, count, random::Stream(seed, replication, random::Substream::probes_right));
    return p;
  }

 private:
  static Matrix make(Eigen::Index dim, Eigen::Index count, random::Stream stream) {
    const Eigen::Index canon = std::min(count, dim);
    Matrix out = Matrix::Zero(dim, canon + count);
    for (Eigen::Index k = 0; k < canon; ++k) out(k, k) = 1.0;
    for (Eigen::Index k = 0; k < count; ++k) {
      auto col = out.col(canon + k);
      for (Eigen::Index i = 0; i < dim; ++i) col(i) = stream.normal();
      col /= col.norm();
    }
    return out;
  }
};

/// max over probe columns p of ||p' V|| (V with orthonormal columns).
inline double probe_incoherence(const Eigen::Ref<const Matrix> &probes,
                                const Eigen::Ref<const Matrix> &vectors) {
  if (vectors.cols() == 0 || probes.cols() == 0) return 0.0;
  if (probes.rows() != vectors.rows()) {
    throw Error(Errc::dimension, "probe length differs from the vector length");
  }
  return (probes.transpose() * vectors).rowwise().norm().maxCoeff();
}

/// nu_M = sqrt(lambda_r(B'B)); zero when r = 0.
inline double signal_strength(const FactorStructure &truth) {
  if (truth.rank() == 0) return 0.0;
  const Vector s = linalg::singular_values(truth.loadings);
  return s(s.size() - 1);
}

/// Statistics of the R - r extra singular components against the truth.
struct ExtraSpectrumReport {
  Vector gaps;               // lambda_k(U)^2 - lambda_{r+k}(X)^2, k = 1..R-r
  double weyl_margin = std::numeric_limits<double>::infinity();  // min_k lambda_k(U) - lambda_{r+k}(X)
  double incoherence_left = 0.0;   // max_eta ||eta' Xi_{-r}||
  double incoherence_right = 0.0;  // max_zeta ||zeta' V_{-r}||
  double ortho_left = 0.0;         // ||B' Xi_{-r}|| / ||B||_F
  double ortho_right = 0.0;        // ||F' V_{-r}|| / ||F||_F
};

inline ExtraSpectrumReport extra_spectrum_of_fit(const PcaFit &fit, const Panel &x,
                                                 const FactorStructure &truth,
                                                 const ProbeSet &probes) {
  const Matrix &u = truth.require_noise();
  const Eigen::Index r = truth.rank();
  const Eigen::Index working = fit.working_dim;
  if (r > working) {
    throw Error(Errc::dimension, "extra spectrum needs R >= r");
  }
  ExtraSpectrumReport out;
  const Eigen::Index extra = working - r;
  out.gaps = Vector::Zero(extra);
  if (extra == 0) {
    out.weyl_margin = 0.0;
    return out;
  }
  const Vector sx = linalg::singular_values(x.data());
  const Vector su = linalg::singular_values(u);
  for (Eigen::Index k = 0; k < extra; ++k) {
    const double lx = sx(r + k);
    const double lu = su(k);
    out.gaps(k) = lu * lu - lx * lx;
    out.weyl_margin = std::min(out.weyl_margin, lu - lx);
  }
  const SplitFit parts = split(fit, r);
  const Matrix xi_extra = parts.extra_left();
  const Matrix v_extra = parts.extra_right();
  out.incoherence_left = probe_incoherence(probes.left, xi_extra);
  out.incoherence_right = probe_incoherence(probes.right, v_extra);
  if (r > 0) {
    out.ortho_left = linalg::spectral_norm(truth.loadings.transpose() * xi_extra) /
                     truth.loadings.norm();
    out.ortho_right = linalg::spectral_norm(truth.factors.transpose() * v_extra) /
                      truth.factors.norm();
  }
  return out;
}

inline ExtraSpectrumReport extra_spectrum(const Panel &x, const FactorStructure &truth,
                                          Eigen::Index working_dim, const ProbeSet &probes) {
  truth.require_noise();
  if (truth.n() != x.n_rows() || truth.t() != x.n_cols()) {
    throw Error(Errc::dimension, "truth is not paired with the panel");
  }
  const PcaFit f = fit(x, working_dim, FitOptions{.compute_m_hat = false});
  return extra_spectrum_of_fit(f, x, truth, probes);
}

/// (||B_hat' U G_T|| / (NT), ||F_hat' U' G_N|| / (NT)).
inline std::pair<double, double> corollary_cross_terms(const PcaFit &fit,
                                                       const FactorStructure &truth,
                                                       const Eigen::Ref<const Matrix> &g_n,
                                                       const Eigen::Ref<const Matrix> &g_t) {
  const Matrix &u = truth.require_noise();
  if (g_n.rows() != fit.n() || g_t.rows() != fit.t() || u.rows() != fit.n() ||
      u.cols() != fit.t()) {
    throw Error(Errc::dimension, "G_N must be N x K and G_T must be T x K");
  }
  const double nt = static_cast<double>(fit.n()) * static_cast<double>(fit.t());
  const double left = linalg::spectral_norm(fit.b_hat.transpose() * (u * g_t)) / nt;
  const double right = linalg::spectral_norm(fit.f_hat.transpose() * (u.transpose() * g_n)) / nt;
  return {left, right};
}

/// ||M_hat - M||_F / sqrt(NT).
inline double lowrank_error(const PcaFit &fit, const FactorStructure &truth) {
  if (truth.n() != fit.n() || truth.t() != fit.t()) {
    throw Error(Errc::dimension, "truth is not paired with the fit");
  }
  const Matrix m_hat = fit.m_hat.size() > 0
                           ? fit.m_hat
                           : Matrix(fit.triple.left * fit.triple.singular_values.asDiagonal() *
                                    fit.triple.right.transpose());
  const double nt = static_cast<double>(fit.n()) * static_cast<double>(fit.t());
  return (m_hat - truth.signal()).norm() / std::sqrt(nt);
}

/// Log-log least-squares fit statistic ~ scale^slope.
struct RateFit {
  std::vector<std::pair<double, double>> grid;
  double slope = 0.0;
  double intercept = 0.0;
  double std_error = 0.0;
};

inline RateFit rate_regression(std::vector<std::pair<double, double>> points) {
  if (points.size() < 3) throw Error(Errc::input, "rate regression needs at least 3 points");
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto &[s, v] : points) {
    if (!(s > 0.0) || !(v > 0.0)) {
      throw Error(Errc::log_domain, "rate regression needs positive scales and statistics");
    }
    mx += std::log(s);
    my += std::log(v);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto &[s, v] : points) {
    const double dx = std::log(s) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(v) - my);
  }
  if (sxx == 0.0) throw Error(Errc::input, "rate regression needs at least two distinct scales");
  RateFit out;
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  double ssr = 0.0;
  for (const auto &[s, v] : points) {
    const double e = std::log(v) - out.intercept - out.slope * std::log(s);
    ssr += e * e;
  }
  out.std_error = std::sqrt(ssr / (n - 2.0) / sxx);
  out.grid = std::move(points);
  return out;
}

/// Probe alignment of all R leading singular vectors of a factor-free panel.
struct BoundaryReport {
  double incoherence_left = 0.0;
  double incoherence_right = 0.0;
};

inline BoundaryReport boundary_case_r0(const Panel &x, Eigen::Index working_dim,
                                       const ProbeSet &probes) {
  const SvdTriple tr = svd_top(x, working_dim);
  return {probe_incoherence(probes.left, tr.left), probe_incoherence(probes.right, tr.right)};
}

}  // namespace fopca

#endif  // FOPCA_DIAGNOSTICS_HPP_
