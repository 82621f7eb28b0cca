#ifndef FOPCA_MP_LAW_HPP_
#define FOPCA_MP_LAW_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fopca/error.hpp"

namespace fopca {

/// Discrete population spectrum pi = sum_i w_i delta_{s_i} of Sigma_e.
class SpectralMeasure {
 public:
  struct Atom {
    double s;
    double weight;
  };

  SpectralMeasure() = default;

  /// Atoms must be strictly decreasing in s with positive weights summing to 1.
  explicit SpectralMeasure(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw Error(Errc::input, "spectral measure has no atoms");
    double total = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      const auto &a = atoms_[i];
      if (!(a.s > 0.0) || !std::isfinite(a.s)) {
        throw Error(Errc::input, "atom locations must be positive and finite");
      }
      if (!(a.weight > 0.0) || a.weight > 1.0) {
        throw Error(Errc::input, "atom weights must lie in (0, 1]");
      }
      if (i > 0 && !(a.s < atoms_[i - 1].s)) {
        throw Error(Errc::input, "atoms must be strictly decreasing in s");
      }
      total += a.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw Error(Errc::input, "atom weights sum to " + std::to_string(total));
    }
  }

  /// Empirical spectral measure of a list of positive eigenvalues. Values
  /// equal within `merge_tol` (relative) share an atom.
  static SpectralMeasure from_eigenvalues(std::vector<double> values,
                                          double merge_tol = 1e-12) {
    if (values.empty()) throw Error(Errc::input, "no eigenvalues given");
    std::sort(values.begin(), values.end(), std::greater<>());
    std::vector<Atom> atoms;
    const double w = 1.0 / static_cast<double>(values.size());
    for (double v : values) {
      if (!atoms.empty() && atoms.back().s - v <= merge_tol * atoms.back().s) {
        atoms.back().weight += w;
      } else {
        atoms.push_back({v, w});
      }
    }
    double total = 0.0;
    for (const auto &a : atoms) total += a.weight;
    for (auto &a : atoms) a.weight /= total;
    return SpectralMeasure(std::move(atoms));
  }

  /// Single atom at s = sigma2 (homoskedastic noise).
  static SpectralMeasure single(double sigma2) {
    return SpectralMeasure({{sigma2, 1.0}});
  }

  const std::vector<Atom> &atoms() const noexcept { return atoms_; }
  std::size_t size() const noexcept { return atoms_.size(); }

 private:
  std::vector<Atom> atoms_;
};

namespace mp_detail {

inline void check_pole(const SpectralMeasure &measure, double x) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (x == 0.0 || std::abs(x) < 1e-300) {
    throw Error(Errc::pole, "f has a pole at x = 0");
  }
  for (const auto &a : measure.atoms()) {
    const double pole = -1.0 / a.s;
    if (std::abs(x - pole) <= 2.0 * eps * std::abs(pole)) {
      std::ostringstream os;
      os << "f has a pole at x = " << pole;
      throw Error(Errc::pole, os.str());
    }
  }
}

}  // namespace mp_detail

/// f(x) = -1/x + sum_i r_i / (x + 1/s_i),  r_i = phi * w_i.
inline double evaluate_f(const SpectralMeasure &measure, double phi, double x) {
  mp_detail::check_pole(measure, x);
  double sum = -1.0 / x;
  for (const auto &a : measure.atoms()) sum += phi * a.weight / (x + 1.0 / a.s);
  return sum;
}

/// f'(x) = 1/x^2 - sum_i r_i / (x + 1/s_i)^2.
inline double evaluate_df(const SpectralMeasure &measure, double phi, double x) {
  mp_detail::check_pole(measure, x);
  double sum = 1.0 / (x * x);
  for (const auto &a : measure.atoms()) {
    const double d = x + 1.0 / a.s;
    sum -= phi * a.weight / (d * d);
  }
  return sum;
}

/// f''(x) = -2/x^3 + 2 sum_i r_i / (x + 1/s_i)^3.
inline double evaluate_d2f(const SpectralMeasure &measure, double phi, double x) {
  mp_detail::check_pole(measure, x);
  double sum = -2.0 / (x * x * x);
  for (const auto &a : measure.atoms()) {
    const double d = x + 1.0 / a.s;
    sum += 2.0 * phi * a.weight / (d * d * d);
  }
  return sum;
}

/// Solved deformed Marchenko-Pastur law on the covariance-eigenvalue scale:
/// the limiting spectrum of Sigma^{1/2} E E' Sigma^{1/2} / T.
struct MpLaw {
  SpectralMeasure measure;
  double phi = 0.0;
  std::vector<double> critical_points;  // x_1 >= ... >= x_{2p-1}, then x_{2p} in I_0
  std::vector<double> edges;            // a_k = f(x_k), nonincreasing
  std::vector<bool> degenerate;         // per critical point
  std::vector<std::pair<double, double>> bulks;  // [a_{2k}, a_{2k-1}]

  std::size_t p() const noexcept { return bulks.size(); }
  bool has_degenerate() const {
    return std::find(degenerate.begin(), degenerate.end(), true) != degenerate.end();
  }
  /// Mass of the N x N eigenvalue density away from zero: min(1, 1/phi).
  double bulk_mass() const noexcept { return std::min(1.0, 1.0 / phi); }
  double default_eta() const noexcept { return 1e-6 * edges.front(); }
};

/// Edge on the singular-value scale of Sigma^{1/2} E / sqrt(T).
inline double to_singular_scale(double eigenvalue) { return std::sqrt(eigenvalue); }
/// Edge on the scale of the singular values of U = Sigma^{1/2} E itself.
inline double to_noise_singular_value(double eigenvalue, double t) {
  return std::sqrt(eigenvalue * t);
}

namespace mp_detail {

struct CriticalPoint {
  double x;
  bool degenerate;
  int interval;  // 0 for I_0, i for I_i
};

inline double d2f_scale(const SpectralMeasure &m, double phi, double x) {
  double s = 2.0 / std::abs(x * x * x);
  for (const auto &a : m.atoms()) {
    const double d = x + 1.0 / a.s;
    s += 2.0 * phi * a.weight / std::abs(d * d * d);
  }
  return s;
}

inline double df_scale(const SpectralMeasure &m, double phi, double x) {
  double s = 1.0 / (x * x);
  for (const auto &a : m.atoms()) {
    const double d = x + 1.0 / a.s;
    s += phi * a.weight / (d * d);
  }
  return s;
}

inline double bisect_root(const SpectralMeasure &m, double phi, double lo, double hi) {
  double flo = evaluate_df(m, phi, lo);
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (hi - lo <= 1e-15 * std::max(std::abs(mid), 1e-300)) break;
    const double fm = evaluate_df(m, phi, mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Golden-section search for the maximum of f' on [lo, hi].
inline double argmax_df(const SpectralMeasure &m, double phi, double lo, double hi) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = evaluate_df(m, phi, c), fd = evaluate_df(m, phi, d);
  for (int it = 0; it < 300 && (b - a) > 1e-15 * std::max(std::abs(a), 1e-300); ++it) {
    if (fc > fd) {
      b = d; d = c; fd = fc;
      c = b - g * (b - a);
      fc = evaluate_df(m, phi, c);
    } else {
      a = c; c = d; fc = fd;
      d = a + g * (b - a);
      fd = evaluate_df(m, phi, d);
    }
  }
  return 0.5 * (a + b);
}

// Relative threshold on |f''| (resp. max f') marking a degenerate critical point.
inline constexpr double kDegenerateTol = 1e-8;

/// Scans a sorted grid of x values for sign changes of f' and refines each by
/// bisection. When no sign change is found and `allow_double` is set, a
/// touching maximum of f' is reported as a degenerate (double) root.
inline void scan_grid(const SpectralMeasure &m, double phi, const std::vector<double> &grid,
                      int interval, bool allow_double, std::vector<CriticalPoint> &out) {
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) values[i] = evaluate_df(m, phi, grid[i]);
  bool found = false;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (values[i] == 0.0 || (values[i] < 0.0) != (values[i + 1] < 0.0)) {
      const double x = values[i] == 0.0 ? grid[i] : bisect_root(m, phi, grid[i], grid[i + 1]);
      const double curv = std::abs(evaluate_d2f(m, phi, x));
      const bool degen = curv < kDegenerateTol * d2f_scale(m, phi, x);
      out.push_back({x, degen, interval});
      if (degen) out.push_back({x, true, interval});
      found = true;
    }
  }
  if (found || !allow_double) return;
  const auto best = std::max_element(values.begin(), values.end());
  const std::size_t i = static_cast<std::size_t>(best - values.begin());
  if (i == 0 || i + 1 >= grid.size()) return;
  const double x = argmax_df(m, phi, grid[i - 1], grid[i + 1]);
  const double top = evaluate_df(m, phi, x);
  if (std::abs(top) < kDegenerateTol * df_scale(m, phi, x)) {
    out.push_back({x, true, interval});
    out.push_back({x, true, interval});
  }
}

/// Grid on the open interval (lo, hi), refined geometrically toward both ends.
inline std::vector<double> interval_grid(double lo, double hi) {
  std::vector<double> t;
  for (double e = 13.0; e >= 1.0; e -= 0.05) {
    t.push_back(std::pow(10.0, -e));
    t.push_back(1.0 - std::pow(10.0, -e));
  }
  for (int i = 1; i < 1000; ++i) t.push_back(i / 1000.0);
  std::sort(t.begin(), t.end());
  std::vector<double> grid;
  grid.reserve(t.size());
  const double w = hi - lo;
  // Keep clear of the endpoint poles by a few ulps.
  const double guard = 16.0 * std::numeric_limits<double>::epsilon() *
                       std::max(std::abs(lo), std::abs(hi));
  for (double v : t) {
    const double x = lo + w * v;
    if (x > lo + guard && x < hi - guard && (grid.empty() || x > grid.back())) grid.push_back(x);
  }
  return grid;
}

/// Grid on (origin, origin + dir * inf) with geometric offsets.
inline std::vector<double> ray_grid(double origin, double dir, double scale) {
  std::vector<double> grid;
  for (double e = -13.0; e <= 13.0; e += 0.01) {
    const double x = origin + dir * scale * std::pow(10.0, e);
    if (x != origin) grid.push_back(x);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

}  // namespace mp_detail

/// Critical points, edges and bulk components of the law for `measure` at
/// aspect ratio `phi` (phi = 1 is excluded).
inline MpLaw solve_law(const SpectralMeasure &measure, double phi) {
  using namespace mp_detail;
  if (!(phi > 0.0) || !std::isfinite(phi)) {
    throw Error(Errc::input, "aspect ratio phi must be positive and finite");
  }
  if (std::abs(phi - 1.0) < 1e-12) {
    throw Error(Errc::unsupported_regime,
                "phi = 1 is excluded: the aspect ratio N/T must stay away from 1");
  }
  const auto &atoms = measure.atoms();
  const std::size_t n = atoms.size();

  std::vector<CriticalPoint> found;
  // I_1 = (-1/s_1, 0)
  scan_grid(measure, phi, interval_grid(-1.0 / atoms[0].s, 0.0), 1, false, found);
  // I_i = (-1/s_i, -1/s_{i-1})
  for (std::size_t i = 1; i < n; ++i) {
    scan_grid(measure, phi, interval_grid(-1.0 / atoms[i].s, -1.0 / atoms[i - 1].s),
              static_cast<int>(i + 1), true, found);
  }
  // I_0: (-inf, -1/s_n) and (0, inf)
  const double outer = 1.0 / atoms[n - 1].s;
  scan_grid(measure, phi, ray_grid(-outer, -1.0, outer), 0, false, found);
  scan_grid(measure, phi, ray_grid(0.0, 1.0, outer), 0, false, found);

  std::vector<CriticalPoint> inner;
  std::vector<CriticalPoint> zero;
  int in_first = 0;
  for (const auto &c : found) {
    if (c.interval == 0) {
      zero.push_back(c);
    } else {
      inner.push_back(c);
      if (c.interval == 1) ++in_first;
    }
  }
  if (zero.size() != 1 || in_first != 1 || inner.size() % 2 != 1) {
    std::ostringstream os;
    os << "critical point bracketing failed: |C cap I_0| = " << zero.size()
       << ", |C cap I_1| = " << in_first << ", |C| = " << found.size()
       << " (phi = " << phi << ", " << n << " atoms)";
    throw Error(Errc::numeric, os.str());
  }
  std::sort(inner.begin(), inner.end(),
            [](const CriticalPoint &a, const CriticalPoint &b) { return a.x > b.x; });
  inner.push_back(zero.front());

  MpLaw law;
  law.measure = measure;
  law.phi = phi;
  for (const auto &c : inner) {
    law.critical_points.push_back(c.x);
    law.degenerate.push_back(c.degenerate);
    law.edges.push_back(evaluate_f(measure, phi, c.x));
  }
  for (std::size_t k = 1; k < law.edges.size(); ++k) {
    const double scale = std::abs(law.edges.front());
    if (law.edges[k] > law.edges[k - 1] + 1e-9 * scale) {
      throw Error(Errc::numeric, "computed edges are not nonincreasing");
    }
    law.edges[k] = std::min(law.edges[k], law.edges[k - 1]);
  }
  for (std::size_t k = 0; k + 1 < law.edges.size(); k += 2) {
    law.bulks.emplace_back(law.edges[k + 1], law.edges[k]);
  }
  return law;
}

/// Iteration controls for the Stieltjes transform solver.
struct StieltjesOptions {
  double damping = 0.5;
  int max_iterations = 10000;
  double tolerance = 1e-12;
  // Newton polishing from the damped iterate every this many steps; 0 disables.
  int newton_every = 100;
};

namespace mp_detail {

inline std::complex<double> fixed_point_map(const MpLaw &law, std::complex<double> z,
                                            std::complex<double> m) {
  std::complex<double> acc = -z;
  for (const auto &a : law.measure.atoms()) acc += law.phi * a.weight * a.s / (1.0 + m * a.s);
  return 1.0 / acc;
}

/// Newton on F(m) = 1/m + z - phi sum w s / (1 + m s); returns false when it
/// leaves the upper half-plane or fails to converge.
inline bool newton_polish(const MpLaw &law, std::complex<double> z, std::complex<double> &m,
                          double tol) {
  std::complex<double> cur = m;
  for (int it = 0; it < 60; ++it) {
    std::complex<double> f = 1.0 / cur + z;
    std::complex<double> df = -1.0 / (cur * cur);
    for (const auto &a : law.measure.atoms()) {
      const std::complex<double> d = 1.0 + cur * a.s;
      f -= law.phi * a.weight * a.s / d;
      df += law.phi * a.weight * a.s * a.s / (d * d);
    }
    const std::complex<double> step = f / df;
    cur -= step;
    if (!std::isfinite(cur.real()) || !std::isfinite(cur.imag())) return false;
    if (std::abs(step) <= tol * std::max(1.0, std::abs(cur))) {
      if (!(cur.imag() > 0.0)) return false;
      const std::complex<double> next = fixed_point_map(law, z, cur);
      if (std::abs(next - cur) > 1e3 * tol * std::max(1.0, std::abs(cur))) return false;
      m = cur;
      return true;
    }
  }
  return false;
}

}  // namespace mp_detail

/// Stieltjes transform m(z), Im z > 0, of the law: the upper-half-plane root
/// of 1/m = -z + phi * sum_i w_i s_i / (1 + m s_i). Damped fixed-point
/// iteration m <- (1 - w) m + w g(m) from m = i/|z|.
inline std::complex<double> stieltjes(const MpLaw &law, std::complex<double> z,
                                      const StieltjesOptions &opt = {}) {
  if (!(z.imag() > 0.0)) throw Error(Errc::input, "Stieltjes transform needs Im z > 0");
  std::complex<double> m(0.0, 1.0 / std::abs(z));
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const std::complex<double> g = mp_detail::fixed_point_map(law, z, m);
    const std::complex<double> next = (1.0 - opt.damping) * m + opt.damping * g;
    residual = std::abs(g - m);
    m = next;
    if (residual <= opt.tolerance * std::max(1.0, std::abs(m))) return m;
    if (opt.newton_every > 0 && it % opt.newton_every == 0) {
      std::complex<double> polished = m;
      if (mp_detail::newton_polish(law, z, polished, opt.tolerance)) return polished;
    }
  }
  std::ostringstream os;
  os << "Stieltjes fixed point did not converge at z = " << z.real() << " + "
     << z.imag() << "i; last residual " << residual;
  throw Error(Errc::numeric, os.str());
}

/// Eigenvalue density of Sigma^{1/2} E E' Sigma^{1/2} / T at x, smoothed at
/// height eta: Im m(x + i eta) / (pi * phi). It integrates to min(1, 1/phi)
/// away from zero.
inline double density(const MpLaw &law, double x, double eta,
                      const StieltjesOptions &opt = {}) {
  if (!(eta > 0.0)) throw Error(Errc::input, "eta must be positive");
  const std::complex<double> z(x, eta);
  std::complex<double> m = stieltjes(law, z, opt);
  // For phi < 1 the companion transform carries an atom (1 - phi) at zero.
  if (law.phi < 1.0) m += (1.0 - law.phi) / z;
  return std::max(0.0, m.imag() / (std::numbers::pi * law.phi));
}

inline double density(const MpLaw &law, double x) {
  return density(law, x, law.default_eta());
}

namespace mp_detail {

// Gauss-Legendre nodes and weights on [-1, 1], 8 points.
inline constexpr double kGaussNodes[8] = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr double kGaussWeights[8] = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

/// Mass of the density over x(theta) for theta in [from, to], with
/// x(theta) = lo + (hi - lo)(1 - cos theta) / 2 absorbing the square-root
/// behaviour at both edges.
inline double bulk_mass_between(const MpLaw &law, double lo, double hi, double from,
                                double to, double eta, const StieltjesOptions &opt) {
  const double half = 0.5 * (to - from);
  const double mid = 0.5 * (to + from);
  double sum = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double theta = mid + half * kGaussNodes[i];
    const double x = lo + 0.5 * (hi - lo) * (1.0 - std::cos(theta));
    sum += kGaussWeights[i] * density(law, x, eta, opt) * 0.5 * (hi - lo) * std::sin(theta);
  }
  return sum * half;
}

inline constexpr int kQuadraturePanels = 128;

}  // namespace mp_detail

/// Total mass of each bulk component, top bulk first.
inline std::vector<double> bulk_masses(const MpLaw &law, double eta = 0.0,
                                       const StieltjesOptions &opt = {}) {
  if (eta <= 0.0) eta = 1e-9 * law.edges.front();
  std::vector<double> out;
  for (const auto &[lo, hi] : law.bulks) {
    double mass = 0.0;
    const double step = std::numbers::pi / mp_detail::kQuadraturePanels;
    for (int j = 0; j < mp_detail::kQuadraturePanels; ++j) {
      mass += mp_detail::bulk_mass_between(law, lo, hi, j * step, (j + 1) * step, eta, opt);
    }
    out.push_back(mass);
  }
  return out;
}

/// Typical eigenvalue locations gamma_{T,k}: the points with
/// (k - 1/2) / T of the T x T spectrum above them, equivalently
/// integral_{gamma}^{inf} rho = (k - 1/2) / N for the N x N density rho.
/// Returned in the order of `ks`.
inline std::vector<double> typical_locations(const MpLaw &law, double t,
                                             const std::vector<long> &ks,
                                             double eta = 0.0,
                                             const StieltjesOptions &opt = {}) {
  if (!(t > 0.0)) throw Error(Errc::input, "T must be positive");
  if (eta <= 0.0) eta = 1e-9 * law.edges.front();
  const double n = law.phi * t;
  const double step = std::numbers::pi / mp_detail::kQuadraturePanels;

  // Cumulative mass from the top edge, panel by panel (theta runs from pi down).
  struct Panel {
    std::size_t bulk;
    double theta_lo, theta_hi;
    double above;  // mass above theta_hi
    double mass;
  };
  std::vector<Panel> panels;
  double total = 0.0;
  for (std::size_t b = 0; b < law.bulks.size(); ++b) {
    const auto [lo, hi] = law.bulks[b];
    for (int j = mp_detail::kQuadraturePanels - 1; j >= 0; --j) {
      const double m = mp_detail::bulk_mass_between(law, lo, hi, j * step, (j + 1) * step, eta, opt);
      panels.push_back({b, j * step, (j + 1) * step, total, m});
      total += m;
    }
  }

  std::vector<double> out;
  out.reserve(ks.size());
  for (long k : ks) {
    if (k < 1) throw Error(Errc::range, "k must be a positive integer");
    const double target = (static_cast<double>(k) - 0.5) / n;
    if (target >= total) {
      std::ostringstream os;
      os << "quantile mass " << target << " for k = " << k
         << " exceeds the bulk mass " << total;
      throw Error(Errc::range, os.str());
    }
    auto it = std::find_if(panels.begin(), panels.end(), [&](const Panel &p) {
      return p.above + p.mass >= target;
    });
    if (it == panels.end()) it = std::prev(panels.end());
    const auto [lo, hi] = law.bulks[it->bulk];
    // Find theta in the panel with mass(theta, theta_hi) = target - above.
    const double need = target - it->above;
    double a = it->theta_lo, b = it->theta_hi;
    for (int iter = 0; iter < 60; ++iter) {
      const double mid = 0.5 * (a + b);
      const double m = mp_detail::bulk_mass_between(law, lo, hi, mid, it->theta_hi, eta, opt);
      if (m < need) b = mid; else a = mid;
      if (b - a < 1e-14) break;
    }
    const double theta = 0.5 * (a + b);
    out.push_back(lo + 0.5 * (hi - lo) * (1.0 - std::cos(theta)));
  }
  return out;
}

/// Regularity verdicts for every edge and bulk component.
struct RegularityReport {
  struct Edge {
    double edge;
    bool above_delta;      // a_k >= delta
    bool separated;        // min_{l != k} |a_k - a_l| >= delta
    bool away_from_poles;  // min_i |x_k + 1/s_i| >= delta
    bool regular() const { return above_delta && separated && away_from_poles; }
  };
  struct Bulk {
    double lo, hi;         // delta'-interior
    double min_density;
    bool regular;
  };
  double delta = 0.0;
  double delta_prime = 0.0;
  double density_floor = 0.0;
  std::vector<Edge> edges;
  std::vector<Bulk> bulks;

  bool all_regular() const {
    for (const auto &e : edges) if (!e.regular()) return false;
    for (const auto &b : bulks) if (!b.regular) return false;
    return true;
  }
};

/// Edge conditions of the regularity definition and, for each bulk, the
/// minimum density over [a_{2k} + delta', a_{2k-1} - delta'] sampled on
/// `samples` points, compared against `density_floor` (default: delta).
inline RegularityReport check_regularity(const MpLaw &law, double delta,
                                         double delta_prime, double density_floor = -1.0,
                                         int samples = 101) {
  if (!(delta > 0.0) || !(delta_prime > 0.0)) {
    throw Error(Errc::input, "delta and delta' must be positive");
  }
  RegularityReport rep;
  rep.delta = delta;
  rep.delta_prime = delta_prime;
  rep.density_floor = density_floor < 0.0 ? delta : density_floor;

  const auto &a = law.edges;
  for (std::size_t k = 0; k < a.size(); ++k) {
    RegularityReport::Edge e{a[k], a[k] >= delta, true, true};
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < a.size(); ++l) {
      if (l != k) gap = std::min(gap, std::abs(a[k] - a[l]));
    }
    e.separated = gap >= delta;
    double pole = std::numeric_limits<double>::infinity();
    for (const auto &atom : law.measure.atoms()) {
      pole = std::min(pole, std::abs(law.critical_points[k] + 1.0 / atom.s));
    }
    e.away_from_poles = pole >= delta;
    rep.edges.push_back(e);
  }

  for (const auto &[lo, hi] : law.bulks) {
    if (delta_prime >= 0.5 * (hi - lo)) {
      std::ostringstream os;
      os << "delta' = " << delta_prime << " leaves no interior in bulk [" << lo << ", "
         << hi << "]";
      throw Error(Errc::empty_interior, os.str());
    }
    RegularityReport::Bulk b{lo + delta_prime, hi - delta_prime,
                             std::numeric_limits<double>::infinity(), false};
    for (int i = 0; i < samples; ++i) {
      const double x = b.lo + (b.hi - b.lo) * i / std::max(1, samples - 1);
      b.min_density = std::min(b.min_density, density(law, x));
    }
    b.regular = b.min_density >= rep.density_floor;
    rep.bulks.push_back(b);
  }
  return rep;
}

}  // namespace fopca

#endif  // FOPCA_MP_LAW_HPP_
