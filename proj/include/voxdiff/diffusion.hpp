#pragma once

#include <random>
#include <span>
#include <vector>

#include "voxdiff/schedule.hpp"
#include "voxdiff/swin_vnet.hpp"
#include "voxdiff/tensor.hpp"
#include "voxdiff/window.hpp"

namespace voxdiff {

// Number of intensity levels of the clipped HU range.
inline constexpr double kIntensityLevels = 2674.0;
// Floor applied to the posterior variance before taking its log.
inline constexpr double kVarianceFloor = 1e-20;
// Floor applied to the boundary-term probabilities before taking their log.
inline constexpr double kProbabilityFloor = 1e-12;

// (x_n - beta_n / sqrt(1 - alpha_bar_n) * eps) / sqrt(1 - beta_n) on `chain`.
double mean_from_noise(double xn, std::size_t n, double eps, const NoiseSchedule& chain);
Tensor mean_from_noise(const Tensor& xn, std::size_t n, const Tensor& eps, const NoiseSchedule& chain);

// Log-space interpolation between beta_n (k = 1) and the posterior variance (k = -1).
double variance_from_coeff(double k, std::size_t n, const NoiseSchedule& chain);
// Differentiable log of the same variance.
Tensor log_variance_from_coeff(const Tensor& k, std::size_t n, const NoiseSchedule& chain);

// Mean absolute error between noise fields.
Tensor loss_mean(const Tensor& eps_true, const Tensor& eps_pred);

// Per-voxel variational bound term. For n >= 2 this is (0.5 / log 2) L_n against the true posterior;
// for n = 1 the reverse step targets x0 itself and the discretized boundary likelihood of x0 is used.
// Rejects var_theta <= 0.
double vlb_term(double x0, double xn, std::size_t n, double mu_theta, double var_theta, const NoiseSchedule& chain);

// Voxel mean of vlb_term; only `log_var_theta` carries gradient.
Tensor loss_vlb(const Tensor& x0, const Tensor& xn, std::size_t n, const Tensor& mu_theta, const Tensor& log_var_theta,
                const NoiseSchedule& chain);

Tensor total_loss(const Tensor& l_mean, const Tensor& l_var, double gamma);

struct LossBreakdown {
  Tensor l_mean;
  Tensor l_var;
  Tensor total;
  double gamma = 0.0;
};

// Hybrid loss for a batch [B, 1, H, W, L]; steps[b] indexes `chain` for batch element b.
// The variance term sees mu_theta as a constant built from `mean_eps` (default: the predicted noise).
// Passing a frozen noise field lets finite differences see the same stop-gradient objective.
LossBreakdown hybrid_loss(const SwinVnet::Output& prediction, const Tensor& x0, const Tensor& xn, const Tensor& eps,
                          std::span<const std::size_t> steps, const NoiseSchedule& chain, double gamma,
                          const Tensor& mean_eps = Tensor());

struct Prediction {
  std::vector<double> eps;
  std::vector<double> coeff;  // in [-1, 1]
};

// Anything that predicts noise and variance coefficient for one volume at one timestep.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Prediction predict(std::span<const double> x, std::span<const double> mr, const Extent3& extents,
                             std::size_t timestep) const = 0;
};

class ModelPredictor : public NoisePredictor {
 public:
  explicit ModelPredictor(const SwinVnet& model) : model_(&model) {}
  Prediction predict(std::span<const double> x, std::span<const double> mr, const Extent3& extents,
                     std::size_t timestep) const override;

 private:
  const SwinVnet* model_;
};

// Fresh standard-normal field.
std::vector<double> standard_normal(std::size_t count, std::mt19937_64& rng);

// x_{s_j} -> x_{s_{j-1}} on the resampled chain. The network sees the original timestep s_j.
// No noise is added at j = 1 or when add_noise is false.
std::vector<double> reverse_step(std::span<const double> x, std::size_t j, std::span<const double> mr,
                                 const Extent3& extents, const NoisePredictor& predictor,
                                 const ResampledSteps& resampled, std::mt19937_64& rng, bool add_noise = true);

// One full reverse trajectory from fresh noise drawn from `rng`.
std::vector<double> sample_trajectory(std::span<const double> mr, const Extent3& extents,
                                      const NoisePredictor& predictor, const ResampledSteps& resampled,
                                      std::mt19937_64& rng);

// Per-voxel mean of one trajectory per rng, summed in run order. Output is in normalized space.
std::vector<double> generate(std::span<const double> mr, const Extent3& extents, const NoisePredictor& predictor,
                             const ResampledSteps& resampled, std::span<std::mt19937_64> runs);

}  // namespace voxdiff
