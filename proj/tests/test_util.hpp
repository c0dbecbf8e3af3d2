#pragma once

#include <random>

#include "prnu/matrix.hpp"

namespace prnu::testing {

inline RealMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double sd = 1.0,
                                double mu = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(mu, sd);
  RealMatrix m(rows, cols);
  for (auto& v : m) v = n(rng);
  return m;
}

inline RealMatrix uniform_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  RealMatrix m(rows, cols);
  for (auto& v : m) v = u(rng);
  return m;
}

}  // namespace prnu::testing
