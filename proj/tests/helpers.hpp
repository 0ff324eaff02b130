#pragma once

#include <random>
#include <vector>

#include "voxdiff/ops.hpp"

namespace testutil {

inline voxdiff::Tensor random_tensor(voxdiff::Shape shape, std::mt19937_64& rng, bool grad = true, double lo = -1.0,
                                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(voxdiff::element_count(shape));
  for (double& x : v) x = u(rng);
  return voxdiff::Tensor::from_values(std::move(shape), std::move(v), grad);
}

// Weighted sum so every output element gets a distinct upstream gradient.
inline voxdiff::Tensor probe_sum(const voxdiff::Tensor& t, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor(t.shape(), rng, false);
  return voxdiff::ops::sum(voxdiff::ops::mul(t, w));
}

}  // namespace testutil
