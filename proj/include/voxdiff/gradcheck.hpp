#pragma once

#include <functional>
#include <span>
#include <vector>

#include "voxdiff/tensor.hpp"

namespace voxdiff {

// One scalar coordinate of a parameter tensor.
struct GradProbe {
  Tensor param;
  std::size_t index = 0;
};

// Compares reverse-mode gradients of `loss_fn` against central differences at each probe.
// Returns max |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
// Kinks (|x| at 0, clamps) are not handled; callers keep probes away from them.
double finite_difference_check(const std::function<Tensor()>& loss_fn, std::span<const GradProbe> probes,
                               double step);

// Every coordinate of every tensor in `params`.
double finite_difference_check(const std::function<Tensor()>& loss_fn, std::span<const Tensor> params,
                               double step);

}  // namespace voxdiff
