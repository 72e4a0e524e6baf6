#pragma once

#include <random>

#include "ddgen/ad/matrix.hpp"

namespace testing {

inline ddgen::ad::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed,
                                       double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ddgen::ad::Matrix m(r, c);
  for (double& v : m.data()) v = u(rng);
  return m;
}

}  // namespace testing
