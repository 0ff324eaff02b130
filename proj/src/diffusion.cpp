#include "voxdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "voxdiff/ops.hpp"

namespace voxdiff {

namespace {

const double kLn2 = std::numbers::ln2;

double gelu_tanh(double x) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double floored_log_posterior_variance(std::size_t n, const NoiseSchedule& chain) {
  return std::log(std::max(chain.posterior_variance(n), kVarianceFloor));
}

enum class Region { Low, Middle, High };

Region boundary_region(double x) {
  const double edge = 1.0 - 1.0 / kIntensityLevels;
  if (x >= edge) return Region::High;
  if (x <= -edge) return Region::Low;
  return Region::Middle;
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  }
}

}  // namespace

double mean_from_noise(double xn, std::size_t n, double eps, const NoiseSchedule& chain) {
  const double beta = chain.beta(n);
  return (xn - beta / std::sqrt(1.0 - chain.alpha_bar(n)) * eps) / std::sqrt(chain.alpha(n));
}

Tensor mean_from_noise(const Tensor& xn, std::size_t n, const Tensor& eps, const NoiseSchedule& chain) {
  require_same("mean_from_noise", xn, eps);
  const double beta = chain.beta(n);
  const double c = beta / std::sqrt(1.0 - chain.alpha_bar(n));
  return ops::scale(ops::sub(xn, ops::scale(eps, c)), 1.0 / std::sqrt(chain.alpha(n)));
}

double variance_from_coeff(double k, std::size_t n, const NoiseSchedule& chain) {
  const double beta = chain.beta(n);
  const double tilde = std::max(chain.posterior_variance(n), kVarianceFloor);
  return std::pow(beta, 0.5 * (k + 1.0)) * std::pow(tilde, 0.5 * (1.0 - k));
}

Tensor log_variance_from_coeff(const Tensor& k, std::size_t n, const NoiseSchedule& chain) {
  const double log_beta = std::log(chain.beta(n));
  const double log_tilde = floored_log_posterior_variance(n, chain);
  return ops::add_scalar(ops::scale(k, 0.5 * (log_beta - log_tilde)), 0.5 * (log_beta + log_tilde));
}

Tensor loss_mean(const Tensor& eps_true, const Tensor& eps_pred) {
  require_same("loss_mean", eps_true, eps_pred);
  return ops::mean(ops::abs(ops::sub(eps_true, eps_pred)));
}

double vlb_term(double x0, double xn, std::size_t n, double mu_theta, double var_theta, const NoiseSchedule& chain) {
  if (!(var_theta > 0.0)) throw std::invalid_argument("vlb_term: variance must be positive");
  if (n >= 2) {
    const auto post = posterior_mean_variance(x0, xn, n, chain);
    const double diff = mu_theta - post.mean;
    const double l = std::log(var_theta) - std::log(post.variance) + post.variance / var_theta +
                     diff * diff / var_theta - 1.0;
    return 0.5 / kLn2 * l;
  }
  (void)chain.beta(n);
  const double inv_sd = std::exp(-0.5 * std::log(var_theta));
  const double d = x0 - mu_theta;
  const double high = gelu_tanh((d + 1.0 / kIntensityLevels) * inv_sd);
  const double low = gelu_tanh((d - 1.0 / kIntensityLevels) * inv_sd);
  double p = 0.0;
  switch (boundary_region(x0)) {
    case Region::Middle: p = high - low; break;
    case Region::High: p = 1.0 - low; break;
    case Region::Low: p = high; break;
  }
  return -std::log(std::max(p, kProbabilityFloor)) / kLn2;
}

Tensor loss_vlb(const Tensor& x0, const Tensor& xn, std::size_t n, const Tensor& mu_theta, const Tensor& log_var_theta,
                const NoiseSchedule& chain) {
  require_same("loss_vlb", x0, xn);
  require_same("loss_vlb", x0, mu_theta);
  require_same("loss_vlb", x0, log_var_theta);
  const auto x0v = x0.values();
  const auto mu = mu_theta.values();
  const std::size_t count = x0.numel();
  const Shape& shape = x0.shape();

  if (n >= 2) {
    const auto xnv = xn.values();
    const double var_true = chain.posterior_variance(n);
    std::vector<double> c(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double diff = mu[i] - (chain.posterior_x0_coef(n) * x0v[i] + chain.posterior_xn_coef(n) * xnv[i]);
      c[i] = var_true + diff * diff;
    }
    Tensor ratio = ops::mul(Tensor::from_values(shape, std::move(c)), ops::exp(ops::scale(log_var_theta, -1.0)));
    Tensor l = ops::add_scalar(ops::add(log_var_theta, ratio), -std::log(var_true) - 1.0);
    return ops::scale(ops::mean(l), 0.5 / kLn2);
  }

  (void)chain.beta(n);
  std::vector<double> up(count), down(count), w_mid(count, 0.0), w_high(count, 0.0), w_low(count, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    const double d = x0v[i] - mu[i];
    up[i] = d + 1.0 / kIntensityLevels;
    down[i] = d - 1.0 / kIntensityLevels;
    switch (boundary_region(x0v[i])) {
      case Region::Middle: w_mid[i] = 1.0; break;
      case Region::High: w_high[i] = 1.0; break;
      case Region::Low: w_low[i] = 1.0; break;
    }
  }
  Tensor inv_sd = ops::exp(ops::scale(log_var_theta, -0.5));
  Tensor high = ops::gelu(ops::mul(Tensor::from_values(shape, std::move(up)), inv_sd), ops::GeluMode::Tanh);
  Tensor low = ops::gelu(ops::mul(Tensor::from_values(shape, std::move(down)), inv_sd), ops::GeluMode::Tanh);
  auto floored_log = [](const Tensor& p) { return ops::log(ops::clamp_min(p, kProbabilityFloor)); };
  Tensor mid_term = ops::mul(Tensor::from_values(shape, std::move(w_mid)), floored_log(ops::sub(high, low)));
  Tensor high_term =
      ops::mul(Tensor::from_values(shape, std::move(w_high)), floored_log(ops::add_scalar(ops::scale(low, -1.0), 1.0)));
  Tensor low_term = ops::mul(Tensor::from_values(shape, std::move(w_low)), floored_log(high));
  return ops::scale(ops::mean(ops::add(ops::add(mid_term, high_term), low_term)), -1.0 / kLn2);
}

Tensor total_loss(const Tensor& l_mean, const Tensor& l_var, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("total_loss: gamma must be nonnegative");
  return ops::add(l_mean, ops::scale(l_var, gamma));
}

LossBreakdown hybrid_loss(const SwinVnet::Output& prediction, const Tensor& x0, const Tensor& xn, const Tensor& eps,
                          std::span<const std::size_t> steps, const NoiseSchedule& chain, double gamma,
                          const Tensor& mean_eps) {
  require_same("hybrid_loss", x0, xn);
  require_same("hybrid_loss", x0, eps);
  require_same("hybrid_loss", x0, prediction.eps);
  require_same("hybrid_loss", x0, prediction.coeff);
  const std::size_t batch = x0.dim(0);
  if (steps.size() != batch) throw ShapeError("hybrid_loss: one step per batch element required");

  if (mean_eps.defined()) require_same("hybrid_loss", x0, mean_eps);
  const Tensor eps_const = (mean_eps.defined() ? mean_eps : prediction.eps).detach();
  Tensor l_var;
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor x0_b = ops::slice(x0, 0, b, b + 1);
    const Tensor xn_b = ops::slice(xn, 0, b, b + 1);
    const Tensor mu = mean_from_noise(xn_b, steps[b], ops::slice(eps_const, 0, b, b + 1), chain);
    const Tensor log_var = log_variance_from_coeff(ops::slice(prediction.coeff, 0, b, b + 1), steps[b], chain);
    Tensor term = loss_vlb(x0_b, xn_b, steps[b], mu, log_var, chain);
    l_var = l_var.defined() ? ops::add(l_var, term) : term;
  }
  l_var = ops::scale(l_var, 1.0 / static_cast<double>(batch));
  Tensor l_mean = loss_mean(eps, prediction.eps);
  return {l_mean, l_var, total_loss(l_mean, l_var, gamma), gamma};
}

Prediction ModelPredictor::predict(std::span<const double> x, std::span<const double> mr, const Extent3& extents,
                                   std::size_t timestep) const {
  NoGradGuard guard;
  const Shape shape{1, 1, extents[0], extents[1], extents[2]};
  const Tensor xt = Tensor::from_values(shape, std::vector<double>(x.begin(), x.end()));
  const Tensor mt = Tensor::from_values(shape, std::vector<double>(mr.begin(), mr.end()));
  const std::size_t steps[1] = {timestep};
  const auto out = model_->forward(xt, mt, steps);
  const auto e = out.eps.values();
  const auto k = out.coeff.values();
  return {std::vector<double>(e.begin(), e.end()), std::vector<double>(k.begin(), k.end())};
}

std::vector<double> standard_normal(std::size_t count, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(count);
  for (double& v : out) v = dist(rng);
  return out;
}

std::vector<double> reverse_step(std::span<const double> x, std::size_t j, std::span<const double> mr,
                                 const Extent3& extents, const NoisePredictor& predictor,
                                 const ResampledSteps& resampled, std::mt19937_64& rng, bool add_noise) {
  const std::size_t count = extents[0] * extents[1] * extents[2];
  if (x.size() != count || mr.size() != count) {
    throw ShapeError("reverse_step: volumes do not match extents " + std::to_string(extents[0]) + "x" +
                     std::to_string(extents[1]) + "x" + std::to_string(extents[2]));
  }
  if (j < 1 || j > resampled.size()) {
    throw std::out_of_range("reverse_step: step " + std::to_string(j) + " outside [1, " +
                            std::to_string(resampled.size()) + "]");
  }
  const auto& chain = resampled.effective;
  const Prediction p = predictor.predict(x, mr, extents, resampled.timestep(j));
  if (p.eps.size() != count || p.coeff.size() != count) throw ShapeError("reverse_step: predictor output size mismatch");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = mean_from_noise(x[i], j, p.eps[i], chain);
  if (add_noise && j > 1) {
    const auto z = standard_normal(count, rng);
    for (std::size_t i = 0; i < count; ++i) {
      out[i] += std::sqrt(variance_from_coeff(std::clamp(p.coeff[i], -1.0, 1.0), j, chain)) * z[i];
    }
  }
  return out;
}

std::vector<double> sample_trajectory(std::span<const double> mr, const Extent3& extents,
                                      const NoisePredictor& predictor, const ResampledSteps& resampled,
                                      std::mt19937_64& rng) {
  std::vector<double> x = standard_normal(extents[0] * extents[1] * extents[2], rng);
  for (std::size_t j = resampled.size(); j >= 1; --j) {
    x = reverse_step(x, j, mr, extents, predictor, resampled, rng);
  }
  return x;
}

std::vector<double> generate(std::span<const double> mr, const Extent3& extents, const NoisePredictor& predictor,
                             const ResampledSteps& resampled, std::span<std::mt19937_64> runs) {
  if (runs.empty()) throw std::invalid_argument("generate: need at least one Monte Carlo run");
  std::vector<double> sum(mr.size(), 0.0);
  for (auto& rng : runs) {
    const auto x = sample_trajectory(mr, extents, predictor, resampled, rng);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += x[i];
  }
  const double r = static_cast<double>(runs.size());
  for (double& v : sum) v /= r;
  return sum;
}

}  // namespace voxdiff
