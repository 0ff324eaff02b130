#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "voxdiff/swin_vnet.hpp"

namespace voxdiff {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string profile = "prostate";
  std::uint64_t seed = 0;

  std::size_t schedule_steps = 1000;
  double schedule_slope = 5e-6;

  std::size_t sampling_steps = 50;  // resampled J
  std::size_t sampling_runs = 5;    // Monte Carlo R
  double sampling_overlap = 0.5;

  Extent3 patch{128, 128, 4};
  std::size_t batch_size = 2;  // patches drawn per pair per step

  double lr = 1e-4;
  double weight_decay = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 800;
  std::size_t checkpoint_every = 0;  // epochs; 0 keeps only the final checkpoint
  double gamma = -1.0;               // negative: J / N

  SwinConfig model;

  double effective_gamma() const;
  void validate() const;

  // Every key, one per line, in a fixed order.
  std::string to_text() const;
};

// Defaults of a named profile: "toy", "brain" or "prostate".
RunConfig profile_config(std::string_view name);

void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

// Base profile (from a "profile" entry if present, else `base`), then every entry in order.
RunConfig resolve_config(const RunConfig& base, const std::vector<std::pair<std::string, std::string>>& entries);

// "key=value" -> (key, value).
std::pair<std::string, std::string> split_setting(std::string_view setting);

}  // namespace voxdiff
