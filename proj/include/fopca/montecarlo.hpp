#ifndef FOPCA_MONTECARLO_HPP_
#define FOPCA_MONTECARLO_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "fopca/error.hpp"
#include "fopca/inference.hpp"
#include "fopca/linalg.hpp"
#include "fopca/panel.hpp"
#include "fopca/pca.hpp"
#include "fopca/random.hpp"

namespace fopca {

enum class EstimatorMode { ols, iv };

inline const char *mode_name(EstimatorMode m) { return m == EstimatorMode::ols ? "ols" : "iv"; }

/// Simulation design: sparse Gaussian loadings (nonzero with probability
/// N^-alpha), heteroskedastic noise Sigma_e = diag(D), D_ii ~ U(0.5, 1.5),
/// and a scalar treatment loaded on the factors.
struct DgpConfig {
  Eigen::Index n = 200;
  Eigen::Index t = 400;
  Eigen::Index r = 3;
  double alpha = 0.0;
  double beta = 0.0;
  double mu_g = 2.0;
  double mu_y = 3.0;
  double mu_z = 1.0;
  double sigma_e_lo = 0.5;
  double sigma_e_hi = 1.5;
  bool fix_sigma_e = false;
  EstimatorMode mode = EstimatorMode::ols;
  // IV design only: corr(eta, first-stage shock) that makes g endogenous.
  double endogeneity = 0.5;
  std::uint64_t seed = 20240601;
  std::uint32_t replications = 1000;

  double loading_probability() const { return std::pow(static_cast<double>(n), -alpha); }

  void validate() const {
    if (n < 2 || t < 3) throw Error(Errc::config, "need N >= 2 and T >= 3");
    if (r < 0) throw Error(Errc::config, "r must be non-negative");
    if (r > std::min(n, t)) throw Error(Errc::config, "r exceeds min(N, T)");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw Error(Errc::config, "alpha must lie in [0, 1)");
    if (!(sigma_e_lo > 0.0 && sigma_e_hi >= sigma_e_lo)) {
      throw Error(Errc::config, "noise variance range must be positive and ordered");
    }
    if (!(std::abs(endogeneity) < 1.0)) throw Error(Errc::config, "endogeneity must lie in (-1, 1)");
    if (replications < 1) throw Error(Errc::config, "replications must be positive");
    for (double v : {beta, mu_g, mu_y, mu_z}) {
      if (!std::isfinite(v)) throw Error(Errc::config, "non-finite DGP parameter");
    }
  }
};

struct SyntheticDraw {
  FactorStructure truth;
  RegressionData data;
  Vector sigma_e;  // D, length N
};

/// One replication of the design; a pure function of (config, rep).
inline SyntheticDraw generate(const DgpConfig &c, std::uint32_t rep) {
  c.validate();
  using random::Stream;
  using random::Substream;
  const Eigen::Index n = c.n, t = c.t, r = c.r;
  auto stream = [&](Substream s) { return Stream(c.seed, rep, s); };

  Matrix b = Matrix::Zero(n, r);
  {
    Stream mask = stream(Substream::loading_mask);
    Stream value = stream(Substream::loading_value);
    const double p = c.loading_probability();
    for (Eigen::Index k = 0; k < r; ++k) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double v = value.normal();
        if (mask.uniform() < p) b(i, k) = v;
      }
    }
  }
  Matrix f(t, r);
  {
    Stream s = stream(Substream::factors);
    for (Eigen::Index k = 0; k < r; ++k)
      for (Eigen::Index i = 0; i < t; ++i) f(i, k) = s.normal();
  }
  Vector d(n);
  {
    Stream s(c.seed, c.fix_sigma_e ? 0xFFFFFFFFu : rep, Substream::sigma_e);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = s.uniform(c.sigma_e_lo, c.sigma_e_hi);
  }
  Matrix u(n, t);
  {
    Stream s = stream(Substream::noise);
    const Vector root = d.array().sqrt();
    for (Eigen::Index j = 0; j < t; ++j)
      for (Eigen::Index i = 0; i < n; ++i) u(i, j) = root(i) * s.normal();
  }
  auto normals = [&](Substream id, Eigen::Index len) {
    Stream s = stream(id);
    Vector v(len);
    for (Eigen::Index i = 0; i < len; ++i) v(i) = s.normal();
    return v;
  };
  const Vector rho = normals(Substream::rho, r);
  const Vector alpha_g = normals(Substream::alpha_g, r);
  const Vector eps_g = normals(Substream::eps_g, t);
  Vector eta = normals(Substream::eta, t);

  Vector g = Vector::Constant(t, c.mu_g) + eps_g;
  Vector z;
  if (r > 0) g += f * alpha_g;
  if (c.mode == EstimatorMode::iv) {
    // z = mu_z + alpha_z'f + eps_z;  g = mu_g + alpha_g'f + eps_z + v + eps_g;
    // eta = rho_ev v + sqrt(1 - rho_ev^2) eta0.
    const Vector alpha_z = normals(Substream::alpha_z, r);
    const Vector eps_z = normals(Substream::eps_z, t);
    const Vector v = normals(Substream::endogenous_shock, t);
    z = Vector::Constant(t, c.mu_z) + eps_z;
    if (r > 0) z += f * alpha_z;
    g += eps_z + v;
    eta = c.endogeneity * v + std::sqrt(1.0 - c.endogeneity * c.endogeneity) * eta;
  }
  Vector y = Vector::Constant(t, c.mu_y) + c.beta * g + eta;
  if (r > 0) y += f * rho;
  if (c.mode == EstimatorMode::ols) z = g;

  FactorStructure truth(std::move(b), std::move(f), std::move(u));
  Panel x = truth.panel();
  SyntheticDraw out{std::move(truth), RegressionData(std::move(y), std::move(g), std::move(z), std::move(x)),
                    std::move(d)};
  return out;
}

/// Summary of one Monte Carlo cell.
struct McSummary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  double q025 = std::numeric_limits<double>::quiet_NaN();
  double q975 = std::numeric_limits<double>::quiet_NaN();
  double ks_p = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_reps = 0;
  std::size_t n_degenerate = 0;
};

/// Kolmogorov survival function P(K > x) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 x^2).
/// Below x = 1.18 the alternating series converges slowly, so the equivalent
/// theta-function form 1 - sqrt(2 pi)/x sum exp(-(2j-1)^2 pi^2 / (8 x^2)) is used.
inline double kolmogorov_survival(double x) {
  if (!(x > 0.0)) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (x < 1.18) {
    double sum = 0.0;
    for (int j = 1; j < 100; ++j) {
      const double k = 2.0 * j - 1.0;
      const double term = std::exp(-k * k * pi * pi / (8.0 * x * x));
      sum += term;
      if (term < 1e-16) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / x * sum, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int j = 1; j < 100; ++j) {
    const double term = std::exp(-2.0 * j * j * x * x);
    sum += (j % 2 == 1 ? term : -term);
    if (term < 1e-12) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Two-sided one-sample KS statistic D_n against N(0, 1).
inline double ks_statistic_normal(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = random::normal_cdf(samples[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic p-value of the KS test of `samples` against N(0, 1).
inline double ks_test_normal(const std::vector<double> &samples) {
  if (samples.size() < 10) {
    throw Error(Errc::sample_size, "KS test needs at least 10 samples, got " +
                                       std::to_string(samples.size()));
  }
  for (double v : samples) {
    if (!std::isfinite(v)) throw Error(Errc::input, "KS test samples must be finite");
  }
  const double d = ks_statistic_normal(samples);
  return kolmogorov_survival(std::sqrt(static_cast<double>(samples.size())) * d);
}

/// Type-7 sample quantile of sorted data.
inline double quantile_sorted(const std::vector<double> &sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Mean, unbiased sd, type-7 0.025/0.975 quantiles and KS p-value. With a
/// single sample sd is NaN; with fewer than 10 the KS p-value is NaN.
inline McSummary summarize(const std::vector<double> &samples) {
  McSummary s;
  s.n_reps = samples.size();
  if (samples.empty()) return s;
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  s.mean = mean;
  if (samples.size() >= 2) {
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  s.q025 = quantile_sorted(sorted, 0.025);
  s.q975 = quantile_sorted(sorted, 0.975);
  if (samples.size() >= 10) s.ks_p = ks_test_normal(samples);
  return s;
}

/// Per-R results of one experiment. t_values[k][rep] is sqrt(T)(beta_hat -
/// beta)/sigma_hat at working_dims[k], NaN for degenerate replications.
struct ExperimentResult {
  std::vector<Eigen::Index> working_dims;
  std::vector<McSummary> summaries;
  std::vector<std::vector<double>> t_values;
  std::vector<std::vector<double>> beta_hat;
};

namespace mc_detail {

/// Runs body(rep) for rep in [0, count) on `threads` workers. The first
/// exception (lowest replication index) is rethrown after all workers stop.
template <class Body>
void parallel_for(std::uint32_t count, unsigned threads, Body body) {
  threads = std::max(1u, std::min<unsigned>(threads, count));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::uint32_t> next{0};
  std::atomic<bool> failed{false};
  auto worker = [&] {
    while (!failed.load()) {
      const std::uint32_t i = next.fetch_add(1);
      if (i >= count) break;
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
        failed.store(true);
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto &th : pool) th.join();
  }
  for (auto &e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace mc_detail

/// Replicates the design and estimates beta at every working dimension in
/// `dims` on the same draws (one SVD per replication at max(dims)). Results
/// are written to per-replication slots, so they do not depend on `threads`.
inline ExperimentResult run_experiment(const DgpConfig &config,
                                       const std::vector<Eigen::Index> &dims,
                                       unsigned threads = 1) {
  config.validate();
  if (dims.empty()) throw Error(Errc::config, "R_list is empty");
  Eigen::Index top = 0;
  for (auto r : dims) {
    if (r < 0 || r > std::min(config.n, config.t) || r + 1 >= config.t) {
      throw Error(Errc::config, "working dimension R = " + std::to_string(r) +
                                    " is outside [0, min(N, T)] or leaves no degrees of freedom");
    }
    top = std::max(top, r);
  }
  const std::uint32_t reps = config.replications;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ExperimentResult out;
  out.working_dims = dims;
  out.t_values.assign(dims.size(), std::vector<double>(reps, nan));
  out.beta_hat.assign(dims.size(), std::vector<double>(reps, nan));

  mc_detail::parallel_for(reps, threads, [&](std::uint32_t rep) {
    const SyntheticDraw draw = generate(config, rep);
    const RegressionData &d = draw.data;
    Matrix f_hat(config.t, 0);
    if (top > 0) {
      f_hat = fit_from_triple(svd_top(d.panel, top), config.n, config.t,
                              FitOptions{.compute_m_hat = false})
                  .f_hat;
    }
    for (std::size_t k = 0; k < dims.size(); ++k) {
      try {
        const InferenceResult res =
            iv_estimate_with_factors(d.y, d.g, d.z, f_hat.leftCols(dims[k]));
        out.t_values[k][rep] = res.centered_t(config.beta);
        out.beta_hat[k][rep] = res.beta_hat;
      } catch (const InferenceError &) {
        // degenerate replication: counted by the summary below
      }
    }
  });

  for (std::size_t k = 0; k < dims.size(); ++k) {
    std::vector<double> ok;
    std::size_t bad = 0;
    for (double v : out.t_values[k]) {
      if (std::isfinite(v)) ok.push_back(v); else ++bad;
    }
    if (ok.empty()) {
      throw Error(Errc::numeric, "every replication is degenerate at R = " +
                                     std::to_string(dims[k]));
    }
    McSummary s = summarize(ok);
    s.n_degenerate = bad;
    out.summaries.push_back(s);
  }
  return out;
}

}  // namespace fopca

#endif  // FOPCA_MONTECARLO_HPP_
