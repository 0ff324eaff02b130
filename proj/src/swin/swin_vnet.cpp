#include "voxdiff/swin_vnet.hpp"

#include <random>
#include <stdexcept>
#include <string>

#include "voxdiff/ops.hpp"

namespace voxdiff {

namespace {

constexpr std::size_t kHalvings = 5;

std::string extent_text(const Extent3& e) {
  return std::to_string(e[0]) + "x" + std::to_string(e[1]) + "x" + std::to_string(e[2]);
}

}  // namespace

void SwinConfig::validate() const {
  for (auto w : widths) {
    if (w == 0) throw std::invalid_argument("model: channel widths must be positive");
  }
  if (heads == 0) throw std::invalid_argument("model: heads must be positive");
  for (std::size_t k = 1; k < widths.size(); ++k) {
    if (widths[k] % heads != 0) {
      throw std::invalid_argument("model: width " + std::to_string(widths[k]) + " at attention level " +
                                  std::to_string(k) + " is not divisible by " + std::to_string(heads) + " heads");
    }
  }
  for (const auto& w : windows) {
    for (auto a : w.size) {
      if (a == 0) throw std::invalid_argument("model: window extents must be positive");
    }
  }
  if (embed_dim < 2 || embed_dim % 2 != 0) throw std::invalid_argument("model: embed_dim must be even and >= 2");
  if (!(max_period > 0.0)) throw std::invalid_argument("model: max_period must be positive");
  if (in_channels != 2) throw std::invalid_argument("model: in_channels must be 2 (noisy CT and MR)");
  if (out_channels != 2) throw std::invalid_argument("model: out_channels must be 2 (noise and coefficient)");
  if (max_groups == 0) throw std::invalid_argument("model: max_groups must be positive");
}

std::array<Extent3, 6> level_extents(const SwinConfig& config, const Extent3& input) {
  std::array<Extent3, 6> levels{};
  levels[0] = input;
  for (auto e : input) {
    if (e == 0) throw ShapeError("model: zero input extent");
  }
  for (std::size_t k = 1; k <= kHalvings; ++k) {
    levels[k] = levels[k - 1];
    for (std::size_t a = 0; a < 2; ++a) {
      const std::size_t e = levels[k - 1][a];
      if (e == 1) continue;
      if (e % 2 != 0) {
        throw ShapeError("model: input " + extent_text(input) +
                         " cannot be halved five times in-plane; H and W must each be a multiple of 32 or a power "
                         "of two below 32");
      }
      levels[k][a] = e / 2;
    }
  }
  for (std::size_t k = 1; k <= kHalvings; ++k) {
    const auto& window = config.windows[std::min<std::size_t>(k, 4) - 1];
    try {
      (void)effective_window(levels[k], window);
    } catch (const ShapeError& e) {
      throw ShapeError("model: input " + extent_text(input) + " gives level-" + std::to_string(k) + " features " +
                       extent_text(levels[k]) + " that window " + extent_text(window.size) +
                       " does not tile; each extent must be a multiple of min(window, extent)");
    }
  }
  return levels;
}

Tensor Resample::operator()(const Tensor& x, const Extent3& target) const {
  return conv(ops::resample_trilinear(x, target));
}

SwinVnet::SwinVnet(SwinConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  ModuleBuilder root(params_, rng);
  const auto& c = config_.widths;
  const std::size_t g = config_.max_groups, d = config_.embed_dim, p = config_.heads;
  auto width = [&](std::size_t k) { return c[std::min<std::size_t>(k, 4)]; };

  early_ = root.conv("early", config_.in_channels, c[0], 1, true);
  enc_conv_ = ConvBlock::build(root.scope("enc0"), c[0], c[0], d, g);
  down_[0].conv = root.conv("down0", c[0], c[1], 1, true);
  for (std::size_t k = 1; k <= 4; ++k) {
    const std::string tag = std::to_string(k);
    enc_swin_[k - 1] = SwinBlock::build(root.scope("enc" + tag), c[k], p, config_.windows[k - 1], d, g);
    down_[k].conv = root.conv("down" + tag, c[k], width(k + 1), 1, true);
  }
  middle_[0] = SwinBlock::build(root.scope("mid1"), c[4], p, config_.windows[3], d, g);
  middle_[1] = SwinBlock::build(root.scope("mid2"), c[4], p, config_.windows[3], d, g);
  for (std::size_t k = 4; k >= 1; --k) {
    const std::string tag = std::to_string(k);
    up_[k].conv = root.conv("up" + tag, width(k + 1), c[k], 1, true);
    merge_[k - 1] = root.conv("merge" + tag, 2 * c[k], c[k], 1, true);
    dec_swin_[k - 1] = SwinBlock::build(root.scope("dec" + tag), c[k], p, config_.windows[k - 1], d, g);
  }
  up_[0].conv = root.conv("up0", c[1], c[0], 1, true);
  dec_conv_ = ConvBlock::build(root.scope("dec0"), 2 * c[0], c[0], d, g);
  final_ = root.zero_conv("final", c[0], config_.out_channels, 3);
}

SwinVnet::Output SwinVnet::forward(const Tensor& noisy, const Tensor& mr,
                                   std::span<const std::size_t> timesteps) const {
  if (noisy.rank() != 5 || noisy.shape() != mr.shape() || noisy.dim(1) != 1) {
    throw ShapeError("model: noisy " + to_string(noisy.shape()) + " and MR " + to_string(mr.shape()) +
                     " must both be [B, 1, H, W, L]");
  }
  if (timesteps.size() != noisy.dim(0)) {
    throw ShapeError("model: " + std::to_string(timesteps.size()) + " timesteps for batch " +
                     std::to_string(noisy.dim(0)));
  }
  const auto levels = level_extents(config_, {noisy.dim(2), noisy.dim(3), noisy.dim(4)});
  const Tensor emb = timestep_embedding(timesteps, config_.embed_dim, config_.max_period);

  std::array<Tensor, 5> skips;
  Tensor h = early_(ops::concat(noisy, mr, 1));
  skips[0] = enc_conv_(h, emb);
  h = down_[0](skips[0], levels[1]);
  for (std::size_t k = 1; k <= 4; ++k) {
    skips[k] = enc_swin_[k - 1](h, emb);
    h = down_[k](skips[k], levels[k + 1]);
  }
  h = middle_[1](middle_[0](h, emb), emb);
  for (std::size_t k = 4; k >= 1; --k) {
    h = up_[k](h, levels[k]);
    h = merge_[k - 1](ops::concat(h, skips[k], 1));
    h = dec_swin_[k - 1](h, emb);
  }
  h = up_[0](h, levels[0]);
  h = dec_conv_(ops::concat(h, skips[0], 1), emb);
  Tensor out = final_(h);
  return {ops::slice(out, 1, 0, 1), ops::tanh(ops::slice(out, 1, 1, 2))};
}

}  // namespace voxdiff
