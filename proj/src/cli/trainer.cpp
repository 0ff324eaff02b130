#include "voxdiff/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "voxdiff/diffusion.hpp"

namespace voxdiff {

AdamW::AdamW(std::vector<Tensor> params, double lr, double weight_decay, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto value = params_[i].mutable_values();
    const auto grad = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad.empty() ? 0.0 : grad[k];
      value[k] -= lr_ * wd_ * value[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      value[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
    params_[i].zero_grad();
  }
}

Trainer::Trainer(SwinVnet& model, const RunConfig& config)
    : model_(&model),
      config_(config),
      schedule_(NoiseSchedule::linear(config.schedule_steps, config.schedule_slope)),
      resampled_(resample(schedule_, config.sampling_steps)),
      optimizer_(model.parameters().tensors(), config.lr, config.weight_decay, config.beta1, config.beta2,
                 config.adam_eps),
      rng_(config.seed + 1) {
  model.check_extents(config.patch);
}

LossRecord Trainer::step(const std::vector<PatchPair>& batch) {
  if (batch.empty()) throw TrainingError("empty batch");
  const Extent3& p = config_.patch;
  const std::size_t voxels = p[0] * p[1] * p[2];
  const std::size_t b = batch.size();
  const auto& chain = resampled_.effective;

  std::uniform_int_distribution<std::size_t> pick(1, resampled_.size());
  std::vector<std::size_t> chain_steps(b), timesteps(b);
  std::vector<double> x0(b * voxels), mr(b * voxels), xn(b * voxels);
  std::vector<double> eps = standard_normal(b * voxels, rng_);
  for (std::size_t i = 0; i < b; ++i) {
    if (batch[i].mr.size() != voxels || batch[i].ct.size() != voxels) throw TrainingError("patch size mismatch");
    chain_steps[i] = pick(rng_);
    timesteps[i] = resampled_.timestep(chain_steps[i]);
    const double a = std::sqrt(chain.alpha_bar(chain_steps[i]));
    const double s = std::sqrt(1.0 - chain.alpha_bar(chain_steps[i]));
    for (std::size_t k = 0; k < voxels; ++k) {
      x0[i * voxels + k] = batch[i].ct[k];
      mr[i * voxels + k] = batch[i].mr[k];
      xn[i * voxels + k] = a * batch[i].ct[k] + s * eps[i * voxels + k];
    }
  }
  const Shape shape{b, 1, p[0], p[1], p[2]};
  const Tensor tx0 = Tensor::from_values(shape, std::move(x0));
  const Tensor txn = Tensor::from_values(shape, std::move(xn));
  const Tensor tmr = Tensor::from_values(shape, std::move(mr));
  const Tensor teps = Tensor::from_values(shape, std::move(eps));

  const auto out = model_->forward(txn, tmr, timesteps);
  const auto loss = hybrid_loss(out, tx0, txn, teps, chain_steps, chain, config_.effective_gamma());
  LossRecord r{steps_.size() + 1, loss.l_mean.item(), loss.l_var.item(), loss.total.item()};
  if (!std::isfinite(r.total)) {
    std::ostringstream os;
    os << "non-finite loss at step " << r.index << ": L_mean=" << r.l_mean << " L_var=" << r.l_var
       << " timesteps=";
    for (std::size_t i = 0; i < b; ++i) os << (i ? "," : "") << timesteps[i];
    throw TrainingError(os.str());
  }
  loss.total.backward();
  optimizer_.step();
  steps_.push_back(r);
  return r;
}

LossRecord Trainer::epoch(const std::vector<TrainingPair>& pairs) {
  if (pairs.empty()) throw TrainingError("no training pairs");
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng_);
  LossRecord sum{epochs_.size() + 1, 0.0, 0.0, 0.0};
  for (auto i : order) {
    const auto batch = extract_patches(pairs[i].mr, pairs[i].ct, config_.patch, config_.batch_size, rng_);
    const auto r = step(batch);
    sum.l_mean += r.l_mean;
    sum.l_var += r.l_var;
    sum.total += r.total;
  }
  const double n = static_cast<double>(pairs.size());
  sum.l_mean /= n;
  sum.l_var /= n;
  sum.total /= n;
  epochs_.push_back(sum);
  return sum;
}

std::string loss_log_csv(const std::vector<LossRecord>& records, const std::string& index_name) {
  std::ostringstream os;
  os.precision(10);
  os << index_name << ",L_mean,L_var,L\n";
  for (const auto& r : records) os << r.index << ',' << r.l_mean << ',' << r.l_var << ',' << r.total << '\n';
  return os.str();
}

}  // namespace voxdiff
