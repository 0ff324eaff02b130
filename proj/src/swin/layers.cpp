#include "voxdiff/layers.hpp"

#include <cmath>
#include <algorithm>
#include <stdexcept>

#include "voxdiff/ops.hpp"

namespace voxdiff {

Tensor ParameterSet::add(std::string name, Shape shape) {
  if (find(name).defined()) throw std::invalid_argument("parameter registered twice: " + name);
  Tensor t = Tensor::zeros(std::move(shape), true);
  entries_.emplace_back(std::move(name), t);
  return t;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(t);
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : entries_) total += t.numel();
  return total;
}

Tensor ParameterSet::find(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  return {};
}

std::size_t group_count(std::size_t channels, std::size_t max_groups) {
  if (channels == 0 || max_groups == 0) throw std::invalid_argument("group_count: zero channels or groups");
  for (std::size_t g = std::min(channels, max_groups); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

std::vector<double> sinusoidal_embed(double n, std::size_t dim, double max_period) {
  if (dim == 0 || dim % 2 != 0) {
    throw std::invalid_argument("sinusoidal_embed: dimension must be even and positive, got " + std::to_string(dim));
  }
  if (n < 0.0) throw std::invalid_argument("sinusoidal_embed: negative timestep");
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < half; ++k) {
    const double exponent = half > 1 ? static_cast<double>(k) / static_cast<double>(half - 1) : 0.0;
    const double w = std::pow(max_period, -exponent);
    out[k] = std::sin(n * w);
    out[half + k] = std::cos(n * w);
  }
  return out;
}

Tensor timestep_embedding(std::span<const std::size_t> timesteps, std::size_t dim, double max_period) {
  std::vector<double> values;
  values.reserve(timesteps.size() * dim);
  for (auto n : timesteps) {
    auto e = sinusoidal_embed(static_cast<double>(n), dim, max_period);
    values.insert(values.end(), e.begin(), e.end());
  }
  return Tensor::from_values({timesteps.size(), dim}, std::move(values));
}

Tensor Conv3d::operator()(const Tensor& x) const { return ops::conv3d(x, weight, bias); }

Tensor Dense::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

Tensor GroupNorm::operator()(const Tensor& x) const { return ops::group_norm(x, gamma, beta, groups); }

std::pair<Tensor, Tensor> TimestepProjection::operator()(const Tensor& embedding) const {
  Tensor both = dense(embedding);
  const std::size_t c = both.dim(1) / 2;
  return {ops::slice(both, 1, 0, c), ops::slice(both, 1, c, 2 * c)};
}

Tensor window_attention(const Tensor& tokens, const AttentionWeights& w) {
  if (tokens.rank() != 3) throw ShapeError("window_attention: expected [windows, T, C], got " + to_string(tokens.shape()));
  const std::size_t nw = tokens.dim(0), t = tokens.dim(1), c = tokens.dim(2), p = w.heads;
  if (p == 0 || c % p != 0) {
    throw ShapeError("window_attention: " + std::to_string(c) + " channels not divisible by " + std::to_string(p) +
                     " heads");
  }
  const std::size_t dk = c / p;
  Tensor empty;
  auto split = [&](const Tensor& x) {
    return ops::reshape(ops::permute(ops::reshape(x, {nw, t, p, dk}), {0, 2, 1, 3}), {nw * p, t, dk});
  };
  Tensor q = split(ops::linear(tokens, w.query, empty));
  Tensor k = split(ops::linear(tokens, w.key, empty));
  Tensor v = split(ops::linear(tokens, w.value, empty));
  Tensor scores = ops::scale(ops::matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(dk)));
  Tensor heads = ops::matmul(ops::softmax_last(scores), v);
  Tensor joined = ops::reshape(ops::permute(ops::reshape(heads, {nw, p, t, dk}), {0, 2, 1, 3}), {nw, t, c});
  return ops::linear(joined, w.output, empty);
}

Tensor windowed_self_attention(const Tensor& features, const AttentionWeights& weights, const WindowShape& window,
                               const Extent3& offset) {
  const auto& s = features.shape();
  const Extent3 ext{s[2], s[3], s[4]};
  Tensor windows = window_partition(features, window, offset);
  Tensor attended = window_attention(windows, weights);
  return window_merge(attended, s[0], s[1], ext, window, offset);
}

ModuleBuilder::ModuleBuilder(ParameterSet& params, std::mt19937_64& rng, std::string prefix)
    : params_(&params), rng_(&rng), prefix_(std::move(prefix)) {}

ModuleBuilder ModuleBuilder::scope(const std::string& name) const {
  return ModuleBuilder(*params_, *rng_, prefix_.empty() ? name : prefix_ + "." + name);
}

Tensor ModuleBuilder::trunc_normal(const std::string& name, Shape shape, double std) {
  Tensor t = params_->add(prefix_.empty() ? name : prefix_ + "." + name, std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : t.mutable_values()) {
    double z = dist(*rng_);
    while (std::abs(z) > 2.0) z = dist(*rng_);
    v = z * std;
  }
  return t;
}

Tensor ModuleBuilder::normal(const std::string& name, Shape shape, double std) {
  Tensor t = params_->add(prefix_.empty() ? name : prefix_ + "." + name, std::move(shape));
  std::normal_distribution<double> dist(0.0, std);
  for (double& v : t.mutable_values()) v = dist(*rng_);
  return t;
}

Conv3d ModuleBuilder::conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t kernel,
                           bool bias) {
  const double fan_in = static_cast<double>(cin * kernel * kernel * kernel);
  Conv3d c;
  c.weight = normal(name + ".weight", {cout, cin, kernel, kernel, kernel}, 1.0 / std::sqrt(fan_in));
  if (bias) c.bias = params_->add((prefix_.empty() ? name : prefix_ + "." + name) + ".bias", {cout});
  return c;
}

Conv3d ModuleBuilder::zero_conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t kernel) {
  const std::string full = prefix_.empty() ? name : prefix_ + "." + name;
  return {params_->add(full + ".weight", {cout, cin, kernel, kernel, kernel}), params_->add(full + ".bias", {cout})};
}

Dense ModuleBuilder::dense(const std::string& name, std::size_t in, std::size_t out, bool bias) {
  Dense d;
  d.weight = trunc_normal(name + ".weight", {out, in}, 0.02);
  if (bias) d.bias = params_->add((prefix_.empty() ? name : prefix_ + "." + name) + ".bias", {out});
  return d;
}

GroupNorm ModuleBuilder::norm(const std::string& name, std::size_t channels, std::size_t max_groups) {
  const std::string full = prefix_.empty() ? name : prefix_ + "." + name;
  GroupNorm g;
  g.gamma = params_->add(full + ".gamma", {channels});
  for (double& v : g.gamma.mutable_values()) v = 1.0;
  g.beta = params_->add(full + ".beta", {channels});
  g.groups = group_count(channels, max_groups);
  return g;
}

AttentionWeights ModuleBuilder::attention(const std::string& name, std::size_t channels, std::size_t heads) {
  if (heads == 0 || channels % heads != 0) {
    throw ShapeError("attention: " + std::to_string(channels) + " channels not divisible by " +
                     std::to_string(heads) + " heads");
  }
  AttentionWeights a;
  a.query = trunc_normal(name + ".query", {channels, channels}, 0.02);
  a.key = trunc_normal(name + ".key", {channels, channels}, 0.02);
  a.value = trunc_normal(name + ".value", {channels, channels}, 0.02);
  a.output = trunc_normal(name + ".output", {channels, channels}, 0.02);
  a.heads = heads;
  return a;
}

ConvBlock ConvBlock::build(ModuleBuilder b, std::size_t cin, std::size_t channels, std::size_t embed_dim,
                           std::size_t max_groups) {
  ConvBlock blk;
  blk.time.dense = b.dense("time", embed_dim, 2 * channels, true);
  blk.conv1 = b.conv("conv1", cin, channels, 3, false);
  blk.norm1 = b.norm("norm1", channels, max_groups);
  blk.conv2 = b.conv("conv2", channels, channels, 3, false);
  blk.norm2 = b.norm("norm2", channels, max_groups);
  blk.conv3 = b.conv("conv3", channels, channels, 3, false);
  blk.norm3 = b.norm("norm3", channels, max_groups);
  blk.conv4 = b.conv("conv4", channels, channels, 3, false);
  blk.norm4 = b.norm("norm4", channels, max_groups);
  return blk;
}

Tensor ConvBlock::operator()(const Tensor& x, const Tensor& embedding) const {
  auto [sc, sh] = time(embedding);
  const Tensor first = conv1(x);
  Tensor h = ops::silu(ops::scale_shift(norm1(first), sc, sh));
  h = ops::silu(norm2(conv2(h)));
  h = ops::silu(norm3(conv3(h)));
  h = ops::silu(norm4(conv4(h)));
  return ops::add(first, h);
}

SwinBlock SwinBlock::build(ModuleBuilder b, std::size_t channels, std::size_t heads, const WindowShape& window,
                           std::size_t embed_dim, std::size_t max_groups) {
  SwinBlock blk;
  blk.window = window;
  blk.time.dense = b.dense("time", embed_dim, 2 * channels, true);
  blk.wsa = b.attention("wsa", channels, heads);
  blk.norm1 = b.norm("norm1", channels, max_groups);
  blk.linear1 = b.conv("linear1", channels, channels, 1, false);
  blk.norm2 = b.norm("norm2", channels, max_groups);
  blk.swsa = b.attention("swsa", channels, heads);
  blk.norm3 = b.norm("norm3", channels, max_groups);
  blk.linear2 = b.conv("linear2", channels, channels, 1, false);
  blk.norm4 = b.norm("norm4", channels, max_groups);
  return blk;
}

Tensor SwinBlock::operator()(const Tensor& features, const Tensor& embedding) const {
  const auto& s = features.shape();
  const WindowShape w = effective_window({s[2], s[3], s[4]}, window);
  auto [sc, sh] = time(embedding);
  Tensor a = windowed_self_attention(features, wsa, w, {0, 0, 0});
  a = ops::silu(ops::scale_shift(norm1(a), sc, sh));
  a = ops::silu(norm2(linear1(a)));
  Tensor b = windowed_self_attention(a, swsa, w, w.shift());
  b = ops::silu(norm3(b));
  b = ops::silu(norm4(linear2(b)));
  return ops::add(features, b);
}

}  // namespace voxdiff
