#include "voxdiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace voxdiff {

double finite_difference_check(const std::function<Tensor()>& loss_fn, std::span<const GradProbe> probes,
                               double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");

  for (const auto& p : probes) {
    Tensor t = p.param;
    t.zero_grad();
  }
  loss_fn().backward();

  std::vector<double> analytic;
  analytic.reserve(probes.size());
  for (const auto& p : probes) {
    const auto g = p.param.grad();
    analytic.push_back(g.empty() ? 0.0 : g[p.index]);
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    Tensor t = probes[i].param;
    double& slot = t.mutable_values()[probes[i].index];
    const double saved = slot;
    slot = saved + step;
    const double up = loss_fn().item();
    slot = saved - step;
    const double down = loss_fn().item();
    slot = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::fabs(analytic[i] - numeric) / (std::fabs(analytic[i]) + std::fabs(numeric) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

double finite_difference_check(const std::function<Tensor()>& loss_fn, std::span<const Tensor> params,
                               double step) {
  std::vector<GradProbe> probes;
  for (const auto& p : params)
    for (std::size_t i = 0; i < p.numel(); ++i) probes.push_back({p, i});
  return finite_difference_check(loss_fn, probes, step);
}

}  // namespace voxdiff
