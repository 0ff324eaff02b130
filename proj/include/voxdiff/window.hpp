#pragma once

#include <array>
#include <cstddef>

#include "voxdiff/ops.hpp"
#include "voxdiff/tensor.hpp"

namespace voxdiff {

using Extent3 = std::array<std::size_t, 3>;

// Window size per axis as (N, N, N_L).
struct WindowShape {
  Extent3 size{4, 4, 4};

  std::size_t tokens() const { return size[0] * size[1] * size[2]; }
  // Cyclic offset for the shifted module: half the window per axis.
  Extent3 shift() const { return {size[0] / 2, size[1] / 2, size[2] / 2}; }
  bool operator==(const WindowShape&) const = default;
};

// Clamps each window axis to the feature extent and checks divisibility.
// Throws ShapeError naming the level geometry when an extent is not a multiple of its window.
WindowShape effective_window(const Extent3& extents, const WindowShape& window);

// [B, C, H, W, L] -> [B * windows, tokens, C]. Features are first rolled by -offset per axis
// (offset zero for plain windows). Window order is row-major over the window grid.
Tensor window_partition(const Tensor& features, const WindowShape& window, const Extent3& offset = {0, 0, 0});

// Exact inverse of window_partition for the same geometry and offset.
Tensor window_merge(const Tensor& windows, std::size_t batch, std::size_t channels, const Extent3& extents,
                    const WindowShape& window, const Extent3& offset = {0, 0, 0});

// Cyclic roll of [B, C, H, W, L] by -offset (element at p moves to p - offset).
Tensor cyclic_shift(const Tensor& features, const Extent3& offset);
Tensor cyclic_unshift(const Tensor& features, const Extent3& offset);

}  // namespace voxdiff
