#include "voxdiff/window.hpp"

#include <algorithm>
#include <string>

namespace voxdiff {

namespace {

std::string extents_string(const Extent3& e) {
  return std::to_string(e[0]) + "x" + std::to_string(e[1]) + "x" + std::to_string(e[2]);
}

void require_features(const char* op, const Tensor& t) {
  if (t.rank() != 5) throw ShapeError(std::string(op) + ": expected [B, C, H, W, L], got " + to_string(t.shape()));
}

// For every (b, window, token, c) in partition order, the flat index into [B, C, H, W, L].
ops::IndexMap partition_map(std::size_t batch, std::size_t channels, const Extent3& ext, const WindowShape& win,
                            const Extent3& offset) {
  const Extent3 grid{ext[0] / win.size[0], ext[1] / win.size[1], ext[2] / win.size[2]};
  const std::size_t spatial = ext[0] * ext[1] * ext[2];
  auto map = std::make_shared<std::vector<std::uint32_t>>();
  map->reserve(batch * channels * spatial);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t gx = 0; gx < grid[0]; ++gx)
      for (std::size_t gy = 0; gy < grid[1]; ++gy)
        for (std::size_t gz = 0; gz < grid[2]; ++gz)
          for (std::size_t tx = 0; tx < win.size[0]; ++tx)
            for (std::size_t ty = 0; ty < win.size[1]; ++ty)
              for (std::size_t tz = 0; tz < win.size[2]; ++tz) {
                const std::size_t x = (gx * win.size[0] + tx + offset[0]) % ext[0];
                const std::size_t y = (gy * win.size[1] + ty + offset[1]) % ext[1];
                const std::size_t z = (gz * win.size[2] + tz + offset[2]) % ext[2];
                const std::size_t voxel = (x * ext[1] + y) * ext[2] + z;
                for (std::size_t c = 0; c < channels; ++c) {
                  map->push_back(static_cast<std::uint32_t>((b * channels + c) * spatial + voxel));
                }
              }
  return map;
}

}  // namespace

WindowShape effective_window(const Extent3& extents, const WindowShape& window) {
  WindowShape eff;
  for (std::size_t a = 0; a < 3; ++a) {
    if (window.size[a] == 0) throw ShapeError("window: zero window extent");
    eff.size[a] = std::min(window.size[a], extents[a]);
    if (extents[a] % eff.size[a] != 0) {
      throw ShapeError("window: features " + extents_string(extents) + " are not divisible by window " +
                       extents_string(eff.size));
    }
  }
  return eff;
}

Tensor window_partition(const Tensor& features, const WindowShape& window, const Extent3& offset) {
  require_features("window_partition", features);
  const auto& s = features.shape();
  const Extent3 ext{s[2], s[3], s[4]};
  for (std::size_t a = 0; a < 3; ++a) {
    if (ext[a] % window.size[a] != 0) {
      throw ShapeError("window_partition: features " + extents_string(ext) + " are not divisible by window " +
                       extents_string(window.size));
    }
  }
  const std::size_t count = (ext[0] / window.size[0]) * (ext[1] / window.size[1]) * (ext[2] / window.size[2]);
  auto map = partition_map(s[0], s[1], ext, window, offset);
  return ops::gather(features, {s[0] * count, window.tokens(), s[1]}, std::move(map));
}

Tensor window_merge(const Tensor& windows, std::size_t batch, std::size_t channels, const Extent3& extents,
                    const WindowShape& window, const Extent3& offset) {
  const std::size_t spatial = extents[0] * extents[1] * extents[2];
  if (windows.numel() != batch * channels * spatial || windows.rank() != 3 || windows.shape()[2] != channels ||
      windows.shape()[1] != window.tokens()) {
    throw ShapeError("window_merge: windows " + to_string(windows.shape()) + " do not tile " +
                     extents_string(extents) + " with window " + extents_string(window.size));
  }
  const auto forward = partition_map(batch, channels, extents, window, offset);
  auto inverse = std::make_shared<std::vector<std::uint32_t>>(forward->size());
  for (std::size_t i = 0; i < forward->size(); ++i) (*inverse)[(*forward)[i]] = static_cast<std::uint32_t>(i);
  return ops::gather(windows, {batch, channels, extents[0], extents[1], extents[2]}, std::move(inverse));
}

namespace {

Tensor roll(const Tensor& features, const Extent3& offset, bool forward) {
  require_features("cyclic_shift", features);
  const auto& s = features.shape();
  const Extent3 ext{s[2], s[3], s[4]};
  const std::size_t spatial = ext[0] * ext[1] * ext[2];
  auto map = std::make_shared<std::vector<std::uint32_t>>(features.numel());
  for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc)
    for (std::size_t x = 0; x < ext[0]; ++x)
      for (std::size_t y = 0; y < ext[1]; ++y)
        for (std::size_t z = 0; z < ext[2]; ++z) {
          Extent3 src{x, y, z};
          for (std::size_t a = 0; a < 3; ++a) {
            const std::size_t o = offset[a] % ext[a];
            src[a] = forward ? (src[a] + o) % ext[a] : (src[a] + ext[a] - o) % ext[a];
          }
          (*map)[bc * spatial + (x * ext[1] + y) * ext[2] + z] =
              static_cast<std::uint32_t>(bc * spatial + (src[0] * ext[1] + src[1]) * ext[2] + src[2]);
        }
  return ops::gather(features, s, std::move(map));
}

}  // namespace

Tensor cyclic_shift(const Tensor& features, const Extent3& offset) { return roll(features, offset, true); }
Tensor cyclic_unshift(const Tensor& features, const Extent3& offset) { return roll(features, offset, false); }

}  // namespace voxdiff
