#include "voxdiff/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace voxdiff {

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double slope) {
  if (steps < 1) throw std::invalid_argument("noise schedule: need at least one timestep");
  if (!(slope > 0.0) || !(slope * static_cast<double>(steps) < 1.0)) {
    throw std::invalid_argument("noise schedule: slope * N must lie in (0, 1) so every beta stays below 1, got " +
                                std::to_string(slope * static_cast<double>(steps)));
  }
  NoiseSchedule s;
  s.betas_.assign(steps + 1, 0.0);
  s.alphas_.assign(steps + 1, 1.0);
  s.alpha_bars_.assign(steps + 1, 1.0);
  for (std::size_t n = 1; n <= steps; ++n) {
    s.betas_[n] = slope * static_cast<double>(n);
    s.alphas_[n] = 1.0 - s.betas_[n];
    s.alpha_bars_[n] = s.alpha_bars_[n - 1] * s.alphas_[n];
  }
  return s;
}

NoiseSchedule NoiseSchedule::from_alpha_bars(std::vector<double> alpha_bars) {
  if (alpha_bars.empty()) throw std::invalid_argument("noise schedule: empty alpha_bar sequence");
  NoiseSchedule s;
  s.alpha_bars_.reserve(alpha_bars.size() + 1);
  s.alpha_bars_.push_back(1.0);
  s.betas_.push_back(0.0);
  s.alphas_.push_back(1.0);
  for (double a : alpha_bars) {
    const double prev = s.alpha_bars_.back();
    if (!(a > 0.0) || !(a < prev)) {
      throw std::invalid_argument("noise schedule: alpha_bar values must decrease strictly inside (0, 1)");
    }
    const double ratio = a / prev;
    s.alpha_bars_.push_back(a);
    s.alphas_.push_back(ratio);
    s.betas_.push_back(1.0 - ratio);
  }
  return s;
}

NoiseSchedule NoiseSchedule::subchain(const NoiseSchedule& parent, std::span<const std::size_t> steps) {
  if (steps.empty()) throw std::invalid_argument("noise schedule: empty step list");
  NoiseSchedule s;
  s.betas_.push_back(0.0);
  s.alphas_.push_back(1.0);
  s.alpha_bars_.push_back(1.0);
  std::size_t prev = 0;
  for (auto step : steps) {
    if (step <= prev || step > parent.steps()) {
      throw std::invalid_argument("noise schedule: sub-chain steps must increase strictly within [1, N]");
    }
    if (step == prev + 1) {
      s.betas_.push_back(parent.betas_[step]);
      s.alphas_.push_back(parent.alphas_[step]);
    } else {
      const double ratio = parent.alpha_bars_[step] / parent.alpha_bars_[prev];
      s.alphas_.push_back(ratio);
      s.betas_.push_back(1.0 - ratio);
    }
    s.alpha_bars_.push_back(parent.alpha_bars_[step]);
    prev = step;
  }
  return s;
}

void NoiseSchedule::check_step(std::size_t n) const {
  if (n < 1 || n > steps()) {
    throw std::out_of_range("timestep " + std::to_string(n) + " outside [1, " + std::to_string(steps()) + "]");
  }
}

double NoiseSchedule::beta(std::size_t n) const {
  check_step(n);
  return betas_[n];
}

double NoiseSchedule::alpha(std::size_t n) const {
  check_step(n);
  return alphas_[n];
}

double NoiseSchedule::alpha_bar(std::size_t n) const {
  if (n > steps()) {
    throw std::out_of_range("timestep " + std::to_string(n) + " outside [0, " + std::to_string(steps()) + "]");
  }
  return alpha_bars_[n];
}

double NoiseSchedule::posterior_variance(std::size_t n) const {
  check_step(n);
  return betas_[n] * (1.0 - alpha_bars_[n - 1]) / (1.0 - alpha_bars_[n]);
}

double NoiseSchedule::posterior_x0_coef(std::size_t n) const {
  check_step(n);
  return betas_[n] * std::sqrt(alpha_bars_[n - 1]) / (1.0 - alpha_bars_[n]);
}

double NoiseSchedule::posterior_xn_coef(std::size_t n) const {
  check_step(n);
  return std::sqrt(alphas_[n]) * (1.0 - alpha_bars_[n - 1]) / (1.0 - alpha_bars_[n]);
}

double q_sample(double x0, std::size_t n, double eps, const NoiseSchedule& schedule) {
  if (n < 1) throw std::out_of_range("q_sample: timestep 0 is the clean sample");
  const double ab = schedule.alpha_bar(n);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

std::vector<double> q_sample(std::span<const double> x0, std::size_t n, std::span<const double> eps,
                             const NoiseSchedule& schedule) {
  if (x0.size() != eps.size()) throw std::invalid_argument("q_sample: x0 and eps sizes differ");
  if (n < 1) throw std::out_of_range("q_sample: timestep 0 is the clean sample");
  const double ab = schedule.alpha_bar(n);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Posterior posterior_mean_variance(double x0, double xn, std::size_t n, const NoiseSchedule& schedule) {
  return {schedule.posterior_x0_coef(n) * x0 + schedule.posterior_xn_coef(n) * xn, schedule.posterior_variance(n)};
}

std::vector<double> posterior_mean(std::span<const double> x0, std::span<const double> xn, std::size_t n,
                                   const NoiseSchedule& schedule) {
  if (x0.size() != xn.size()) throw std::invalid_argument("posterior_mean: x0 and xn sizes differ");
  const double c0 = schedule.posterior_x0_coef(n), cn = schedule.posterior_xn_coef(n);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c0 * x0[i] + cn * xn[i];
  return out;
}

ResampledSteps resample(const NoiseSchedule& schedule, std::size_t count) {
  const std::size_t N = schedule.steps();
  if (count < 1) throw std::invalid_argument("resample: need at least one step");
  if (count > N) {
    throw std::invalid_argument("resample: " + std::to_string(count) + " steps exceed the " + std::to_string(N) +
                                "-step chain");
  }
  std::vector<std::size_t> steps;
  if (count == 1) {
    steps.push_back(N);
  } else {
    const double span = static_cast<double>(N - 1) / static_cast<double>(count - 1);
    for (std::size_t j = 0; j < count; ++j) {
      const auto s = static_cast<std::size_t>(std::llround(1.0 + span * static_cast<double>(j)));
      if (steps.empty() || s > steps.back()) steps.push_back(s);
    }
    if (steps.back() != N) steps.push_back(N);
  }
  auto effective = NoiseSchedule::subchain(schedule, steps);
  return {std::move(steps), std::move(effective)};
}

}  // namespace voxdiff
