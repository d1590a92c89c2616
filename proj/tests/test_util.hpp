#pragma once

#include <random>

#include "fgt/tensor.hpp"

namespace fgt::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

inline Index random_extent(std::mt19937_64& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

/// sum(weights * t): a scalar probe whose gradient with respect to t is `weights`.
inline double weighted_sum(const Tensor& t, const Tensor& weights) {
  return (t.array() * weights.array()).sum();
}

}  // namespace fgt::testing
