#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "voxdiff/layers.hpp"
#include "voxdiff/tensor.hpp"
#include "voxdiff/window.hpp"

namespace voxdiff {

struct SwinConfig {
  // Convolutional level followed by attention levels 1-4.
  std::array<std::size_t, 5> widths{32, 64, 128, 256, 256};
  // Attention levels 1-4; decoder levels mirror them, middle blocks use level 4.
  std::array<WindowShape, 4> windows{WindowShape{{4, 4, 4}}, WindowShape{{4, 4, 2}}, WindowShape{{4, 4, 2}},
                                     WindowShape{{2, 2, 2}}};
  std::size_t heads = 4;
  std::size_t embed_dim = 128;
  double max_period = 1e6;
  std::size_t in_channels = 2;
  std::size_t out_channels = 2;
  std::size_t max_groups = 32;

  void validate() const;
  bool operator==(const SwinConfig&) const = default;
};

// Spatial extents at resolution levels 0..5. In-plane axes halve per level (an extent of 1 stays 1);
// depth is kept. Throws ShapeError stating the divisibility requirement.
std::array<Extent3, 6> level_extents(const SwinConfig& config, const Extent3& input);

struct Resample {
  Conv3d conv;  // 1x1x1
  Tensor operator()(const Tensor& x, const Extent3& target) const;
};

// U-shaped denoiser: (noisy CT, MR, timestep) -> (noise estimate, variance coefficient).
class SwinVnet {
 public:
  SwinVnet(SwinConfig config, std::uint64_t seed);
  SwinVnet(const SwinVnet&) = delete;
  SwinVnet& operator=(const SwinVnet&) = delete;
  SwinVnet(SwinVnet&&) = default;
  SwinVnet& operator=(SwinVnet&&) = default;

  struct Output {
    Tensor eps;    // [B, 1, H, W, L]
    Tensor coeff;  // [B, 1, H, W, L], tanh-saturated into (-1, 1)
  };

  // noisy, mr: [B, 1, H, W, L]; one timestep per batch element.
  Output forward(const Tensor& noisy, const Tensor& mr, std::span<const std::size_t> timesteps) const;

  void check_extents(const Extent3& extents) const { (void)level_extents(config_, extents); }

  const SwinConfig& config() const { return config_; }
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }

 private:
  SwinConfig config_;
  ParameterSet params_;
  Conv3d early_;
  ConvBlock enc_conv_;
  std::array<Resample, 5> down_;
  std::array<SwinBlock, 4> enc_swin_;
  std::array<SwinBlock, 2> middle_;
  std::array<Resample, 5> up_;
  std::array<Conv3d, 4> merge_;
  std::array<SwinBlock, 4> dec_swin_;
  ConvBlock dec_conv_;
  Conv3d final_;
};

}  // namespace voxdiff
