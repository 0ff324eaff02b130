#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "voxdiff/config.hpp"
#include "voxdiff/schedule.hpp"
#include "voxdiff/swin_vnet.hpp"
#include "voxdiff/volume.hpp"

namespace voxdiff {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Adam with decoupled weight decay: p <- p - lr * wd * p, then the bias-corrected moment step.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);

  // Consumes the accumulated gradients and clears them.
  void step();
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, wd_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct TrainingPair {
  std::string name;
  Volume mr;  // normalized
  Volume ct;  // normalized
};

struct LossRecord {
  std::size_t index = 0;  // step (1-based) or epoch (1-based)
  double l_mean = 0.0;
  double l_var = 0.0;
  double total = 0.0;
};

class Trainer {
 public:
  Trainer(SwinVnet& model, const RunConfig& config);

  // One optimizer step on a batch of aligned normalized patches.
  LossRecord step(const std::vector<PatchPair>& batch);

  // One pass over `pairs` in shuffled order, one step per pair; returns the epoch mean.
  LossRecord epoch(const std::vector<TrainingPair>& pairs);

  const std::vector<LossRecord>& step_log() const { return steps_; }
  const std::vector<LossRecord>& epoch_log() const { return epochs_; }
  const ResampledSteps& resampled() const { return resampled_; }

 private:
  SwinVnet* model_;
  RunConfig config_;
  NoiseSchedule schedule_;
  ResampledSteps resampled_;
  AdamW optimizer_;
  std::mt19937_64 rng_;
  std::vector<LossRecord> steps_;
  std::vector<LossRecord> epochs_;
};

std::string loss_log_csv(const std::vector<LossRecord>& records, const std::string& index_name);

}  // namespace voxdiff
