#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace voxdiff {

// Per-step variances beta_n (n = 1..N) and cumulative products alpha_bar_n = prod (1 - beta_i),
// with alpha_bar_0 = 1.
class NoiseSchedule {
 public:
  // beta_n = slope * n. Requires steps >= 1 and 0 < slope * steps < 1.
  static NoiseSchedule linear(std::size_t steps, double slope);

  // Chain whose cumulative products are exactly `alpha_bars` (index j = 1..J, strictly decreasing in (0, 1));
  // beta_j = 1 - alpha_bar_j / alpha_bar_{j-1}.
  static NoiseSchedule from_alpha_bars(std::vector<double> alpha_bars);

  // Chain visiting only `steps` (strictly increasing, within [1, N]) of `parent`. Consecutive
  // steps keep the parent's beta exactly; gaps use the alpha_bar ratio.
  static NoiseSchedule subchain(const NoiseSchedule& parent, std::span<const std::size_t> steps);

  std::size_t steps() const { return betas_.size() - 1; }

  double beta(std::size_t n) const;
  // 1 - beta_n, stored separately so ratio-built chains keep full precision.
  double alpha(std::size_t n) const;
  double alpha_bar(std::size_t n) const;  // n in [0, N]

  // Variance of q(x_{n-1} | x_n, x_0); zero at n = 1.
  double posterior_variance(std::size_t n) const;
  // Coefficients of x_0 and x_n in the posterior mean.
  double posterior_x0_coef(std::size_t n) const;
  double posterior_xn_coef(std::size_t n) const;

  std::span<const double> alpha_bars() const { return alpha_bars_; }

 private:
  NoiseSchedule() = default;
  void check_step(std::size_t n) const;

  std::vector<double> betas_;       // [0] unused
  std::vector<double> alphas_;      // [0] unused
  std::vector<double> alpha_bars_;  // [0] == 1
};

// Closed-form forward sample: sqrt(alpha_bar_n) x0 + sqrt(1 - alpha_bar_n) eps.
double q_sample(double x0, std::size_t n, double eps, const NoiseSchedule& schedule);
std::vector<double> q_sample(std::span<const double> x0, std::size_t n, std::span<const double> eps,
                             const NoiseSchedule& schedule);

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;
};

Posterior posterior_mean_variance(double x0, double xn, std::size_t n, const NoiseSchedule& schedule);
std::vector<double> posterior_mean(std::span<const double> x0, std::span<const double> xn, std::size_t n,
                                   const NoiseSchedule& schedule);

// Subsampled chain for fast generation: steps s_1 < ... < s_J = N and the effective chain over j = 1..J.
struct ResampledSteps {
  std::vector<std::size_t> steps;  // timesteps s_j of the full chain, j = 1..J at index j - 1
  NoiseSchedule effective;

  std::size_t size() const { return steps.size(); }
  std::size_t timestep(std::size_t j) const { return steps.at(j - 1); }
};

// round(linspace(1, N, count)), deduplicated, always ending at N.
ResampledSteps resample(const NoiseSchedule& schedule, std::size_t count);

}  // namespace voxdiff
