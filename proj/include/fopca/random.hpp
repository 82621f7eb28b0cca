#ifndef FOPCA_RANDOM_HPP_
#define FOPCA_RANDOM_HPP_

#include <array>
#include <cmath>
#include <cstdint>

namespace fopca {
namespace random {

/// Philox4x32-10 counter-based block cipher (Salmon et al., SC'11). A block is
/// a pure function of (counter, key), so any draw can be recomputed without
/// replaying a sequence.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

inline PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

/// Standard normal quantile, Wichura's AS 241 (PPND16); relative accuracy
/// about 1e-16 over (0, 1).
inline double normal_quantile(double p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
              67265.770927008700853) * r + 45921.953931549871457) * r +
            13731.693765509461125) * r + 1971.5909503065514427) * r +
          133.14166789178437745) * r + 3.387132872796366608);
    const double den =
        (((((((5226.495278852545925 * r + 28729.085735721942674) * r +
              39307.89580009271061) * r + 21213.794301586595867) * r +
            5394.1960214247511077) * r + 687.1870074920579083) * r +
          42.313330701600911252) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  if (r <= 0.0) return q < 0.0 ? -INFINITY : INFINITY;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
                0.24178072517745061177) * r + 1.27045825245236838258) * r +
              3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
                0.0151986665636164571966) * r + 0.14810397642748007459) * r +
              0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                0.0012426609473880784386) * r + 0.026532189526576123093) * r +
              0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
                1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
              0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Substream identifiers. Every random object of a replication reads its own
/// stream, so adding draws to one object never shifts another.
enum class Substream : std::uint32_t {
  loading_mask = 1,
  loading_value = 2,
  factors = 3,
  sigma_e = 4,
  noise = 5,
  rho = 6,
  alpha_g = 7,
  eps_g = 8,
  eta = 9,
  alpha_z = 10,
  eps_z = 11,
  endogenous_shock = 12,
  probes_left = 100,
  probes_right = 101,
  gauges = 102,
};

/// Stream of uniforms and normals keyed by (seed, replication, substream).
/// Draw i of a stream lives in Philox block i / 2 with counter
/// (block, replication, substream, 0) and key (seed low, seed high); each
/// block yields two 53-bit uniforms strictly inside (0, 1).
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint32_t replication, Substream substream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        replication_(replication),
        substream_(static_cast<std::uint32_t>(substream)) {}

  Stream(std::uint64_t seed, std::uint32_t replication, std::uint32_t substream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        replication_(replication),
        substream_(substream) {}

  /// The i-th uniform of this stream, independent of any other call.
  double uniform_at(std::uint64_t index) const {
    const PhiloxCounter block = philox4x32_10(
        {static_cast<std::uint32_t>(index >> 1),
         replication_, substream_, static_cast<std::uint32_t>(index >> 33)},
        key_);
    const std::size_t off = (index & 1u) * 2;
    return to_unit(block[off], block[off + 1]);
  }

  double uniform() { return uniform_at(next_++); }
  double normal() { return normal_quantile(uniform()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t position() const noexcept { return next_; }

 private:
  static double to_unit(std::uint32_t a, std::uint32_t b) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(a >> 5) << 26) | (b >> 6);
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  PhiloxKey key_;
  std::uint32_t replication_;
  std::uint32_t substream_;
  std::uint64_t next_ = 0;
};

}  // namespace random
}  // namespace fopca

#endif  // FOPCA_RANDOM_HPP_
