#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "voxdiff/tensor.hpp"
#include "voxdiff/window.hpp"

namespace voxdiff {

// Named trainable tensors in registration order.
class ParameterSet {
 public:
  Tensor add(std::string name, Shape shape);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t scalar_count() const;
  // Undefined tensor when absent.
  Tensor find(const std::string& name) const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Largest divisor of `channels` not exceeding `max_groups`.
std::size_t group_count(std::size_t channels, std::size_t max_groups);

// First dim/2 entries sin(n w_k), last dim/2 cos(n w_k), w_k = max_period^(-k / (dim/2 - 1)).
std::vector<double> sinusoidal_embed(double n, std::size_t dim, double max_period);
// [B, dim] constant embedding of a batch of timesteps.
Tensor timestep_embedding(std::span<const std::size_t> timesteps, std::size_t dim, double max_period);

struct Conv3d {
  Tensor weight;  // [Co, Ci, k, k, k]
  Tensor bias;    // [Co] or undefined
  Tensor operator()(const Tensor& x) const;
};

struct Dense {
  Tensor weight;  // [N, K]
  Tensor bias;    // [N] or undefined
  Tensor operator()(const Tensor& x) const;
};

struct GroupNorm {
  Tensor gamma, beta;
  std::size_t groups = 1;
  Tensor operator()(const Tensor& x) const;
};

// Per-block linear map of the timestep embedding to a channel scale and shift.
struct TimestepProjection {
  Dense dense;  // embed_dim -> 2 * channels
  std::pair<Tensor, Tensor> operator()(const Tensor& embedding) const;
};

// Multi-head self-attention weights; head p uses rows [p*dk, (p+1)*dk) of query/key/value.
struct AttentionWeights {
  Tensor query, key, value;  // [C, C]
  Tensor output;             // [C, C]
  std::size_t heads = 1;
};

// tokens [windows, T, C] -> [windows, T, C]: softmax(Q K^T / sqrt(C/P)) V per head, heads concatenated
// and projected by the output matrix.
Tensor window_attention(const Tensor& tokens, const AttentionWeights& weights);

// Registers and initializes parameters under a name prefix.
class ModuleBuilder {
 public:
  ModuleBuilder(ParameterSet& params, std::mt19937_64& rng, std::string prefix = {});
  ModuleBuilder scope(const std::string& name) const;

  Conv3d conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t kernel, bool bias);
  Conv3d zero_conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t kernel);
  Dense dense(const std::string& name, std::size_t in, std::size_t out, bool bias);
  GroupNorm norm(const std::string& name, std::size_t channels, std::size_t max_groups);
  AttentionWeights attention(const std::string& name, std::size_t channels, std::size_t heads);

 private:
  Tensor trunc_normal(const std::string& name, Shape shape, double std);
  Tensor normal(const std::string& name, Shape shape, double std);

  ParameterSet* params_;
  std::mt19937_64* rng_;
  std::string prefix_;
};

// Four kernel-3 convolutions, scale-shift after the first, GN + SiLU after each, residual
// from the first convolution's raw output (before its norm) to the last.
struct ConvBlock {
  TimestepProjection time;
  Conv3d conv1, conv2, conv3, conv4;
  GroupNorm norm1, norm2, norm3, norm4;

  static ConvBlock build(ModuleBuilder b, std::size_t cin, std::size_t channels, std::size_t embed_dim,
                         std::size_t max_groups);
  Tensor operator()(const Tensor& x, const Tensor& embedding) const;
};

// Window attention, linear, shifted-window attention, linear; GN + SiLU after each; timestep
// scale-shift after the first module; residual across the block.
struct SwinBlock {
  WindowShape window;
  TimestepProjection time;
  AttentionWeights wsa, swsa;
  Conv3d linear1, linear2;  // 1x1x1, no bias
  GroupNorm norm1, norm2, norm3, norm4;

  static SwinBlock build(ModuleBuilder b, std::size_t channels, std::size_t heads, const WindowShape& window,
                         std::size_t embed_dim, std::size_t max_groups);
  Tensor operator()(const Tensor& features, const Tensor& embedding) const;
};

// Attention over the windows of a [B, C, H, W, L] map, rolled by `offset` first and unrolled after.
Tensor windowed_self_attention(const Tensor& features, const AttentionWeights& weights, const WindowShape& window,
                               const Extent3& offset);

}  // namespace voxdiff
