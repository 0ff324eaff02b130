#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "voxdiff/tensor.hpp"

// Differentiable primitives. Feature maps use the layout [batch, channels, H, W, L].
namespace voxdiff::ops {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor abs(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor silu(const Tensor& a);

enum class GeluMode { Tanh, Erf };
Tensor gelu(const Tensor& a, GeluMode mode = GeluMode::Tanh);

// max(a, floor); the gradient is zero where the floor is active.
Tensor clamp_min(const Tensor& a, double floor);

// Reductions to a rank-0 scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);

// out[i] = a[index[i]]; `index` addresses a's flat storage.
using IndexMap = std::shared_ptr<const std::vector<std::uint32_t>>;
Tensor gather(const Tensor& a, Shape out_shape, IndexMap index);

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);

// x [B, Ci, H, W, L], weight [Co, Ci, k, k, k] (k odd), bias [Co] or undefined.
// Stride 1 with zero padding k/2, so spatial extents are preserved.
Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias);

// x [..., K], weight [N, K], bias [N] or undefined -> [..., N].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// a [B, M, K] times b [B, K, N], or b [B, N, K] when transpose_b.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor softmax_last(const Tensor& a);

// x [B, C, ...] normalized over (C/groups) channels x spatial per sample; gamma, beta [C].
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::size_t groups,
                  double eps = 1e-5);

// h * (1 + sc) + sh with sc, sh [B, C] broadcast over the spatial axes of h [B, C, ...].
Tensor scale_shift(const Tensor& h, const Tensor& sc, const Tensor& sh);

// Linear interpolation along one axis to `length` samples, half-pixel centers
// (factor-2 shrink averages neighbour pairs).
Tensor resample_axis(const Tensor& x, std::size_t axis, std::size_t length);

// Trilinear resampling of [B, C, H, W, L] to the given spatial extents.
Tensor resample_trilinear(const Tensor& x, const std::array<std::size_t, 3>& extents);

}  // namespace voxdiff::ops
