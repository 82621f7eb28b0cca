#ifndef FOPCA_TESTS_TEST_UTIL_HPP_
#define FOPCA_TESTS_TEST_UTIL_HPP_

#include <cstdint>

#include "fopca/fopca.hpp"

namespace testutil {

using fopca::Matrix;
using fopca::Vector;

// Gaussian matrix from a dedicated substream; `tag` separates objects.
inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                       std::uint32_t tag = 0) {
  fopca::random::Stream s(seed, tag, 1000u);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = s.normal();
  return m;
}

inline Vector gaussian_vector(Eigen::Index n, std::uint64_t seed, std::uint32_t tag = 0) {
  return gaussian(n, 1, seed, tag).col(0);
}

// Synthetic (B, F, U) with i.i.d. normal entries; noise scaled by `noise`.
inline fopca::FactorStructure synthetic(Eigen::Index n, Eigen::Index t, Eigen::Index r,
                                        std::uint64_t seed, double noise = 1.0) {
  Matrix b = gaussian(n, r, seed, 1);
  Matrix f = gaussian(t, r, seed, 2);
  Matrix u = noise * gaussian(n, t, seed, 3);
  return fopca::FactorStructure(std::move(b), std::move(f), std::move(u));
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace testutil

#endif  // FOPCA_TESTS_TEST_UTIL_HPP_
