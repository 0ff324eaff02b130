#include <algorithm>
#include <chrono>
#include <cmath>

#include "voxdiff/volume.hpp"

namespace voxdiff {

namespace {

constexpr double kWeightFloor = 1e-3;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<std::size_t> window_starts(std::size_t extent, std::size_t patch) {
  if (patch == 0 || patch > extent) {
    throw ShapeError("sliding window: patch " + std::to_string(patch) + " does not fit extent " +
                     std::to_string(extent));
  }
  const std::size_t stride = std::max<std::size_t>(patch / 2, 1);
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + patch < extent; s += stride) starts.push_back(s);
  if (starts.empty() || starts.back() != extent - patch) starts.push_back(extent - patch);
  return starts;
}

std::vector<double> window_weight(const Extent3& patch) {
  std::array<std::vector<double>, 3> axis;
  for (std::size_t a = 0; a < 3; ++a) {
    const double sigma = static_cast<double>(patch[a]) / 8.0;
    const double center = 0.5 * static_cast<double>(patch[a] - 1);
    axis[a].resize(patch[a]);
    for (std::size_t i = 0; i < patch[a]; ++i) {
      const double d = static_cast<double>(i) - center;
      axis[a][i] = std::exp(-0.5 * d * d / (sigma * sigma));
    }
  }
  std::vector<double> w;
  w.reserve(patch[0] * patch[1] * patch[2]);
  for (double wx : axis[0])
    for (double wy : axis[1])
      for (double wz : axis[2]) w.push_back(std::max(wx * wy * wz, kWeightFloor));
  return w;
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t window, std::uint64_t run) {
  return splitmix64(splitmix64(splitmix64(seed) ^ window) ^ (run + 0x5bd1e995ULL));
}

Volume sliding_window_infer(const Volume& mr, const NoisePredictor& predictor, const ResampledSteps& resampled,
                            const InferenceOptions& options) {
  if (mr.space != Space::Normalized) throw std::invalid_argument("sliding window: MR must be normalized");
  if (options.runs < 1) throw std::invalid_argument("sliding window: need at least one Monte Carlo run");
  const Extent3& patch = options.patch;
  std::array<std::vector<std::size_t>, 3> starts;
  for (std::size_t a = 0; a < 3; ++a) starts[a] = window_starts(mr.extents[a], patch[a]);
  const std::vector<double> weight = window_weight(patch);

  std::vector<double> num(mr.size(), 0.0), den(mr.size(), 0.0);
  const std::size_t total = starts[0].size() * starts[1].size() * starts[2].size();
  std::size_t index = 0;
  for (auto sx : starts[0])
    for (auto sy : starts[1])
      for (auto sz : starts[2]) {
        const auto t0 = std::chrono::steady_clock::now();
        const Extent3 corner{sx, sy, sz};
        const auto mr_patch = crop(mr, corner, patch);
        std::vector<std::mt19937_64> runs;
        for (std::size_t r = 0; r < options.runs; ++r) {
          runs.emplace_back(stream_seed(options.seed, index, options.first_run + r));
        }
        const auto sample = generate(mr_patch, patch, predictor, resampled, runs);
        std::size_t k = 0;
        for (std::size_t x = 0; x < patch[0]; ++x)
          for (std::size_t y = 0; y < patch[1]; ++y)
            for (std::size_t z = 0; z < patch[2]; ++z, ++k) {
              const std::size_t v = mr.index(sx + x, sy + y, sz + z);
              num[v] += weight[k] * sample[k];
              den[v] += weight[k];
            }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (options.on_window) options.on_window(index, total, seconds);
        ++index;
      }

  Volume out(mr.extents, Space::HU);
  out.spacing = mr.spacing;
  for (std::size_t v = 0; v < out.size(); ++v) out.values[v] = static_cast<float>(denormalize_hu(num[v] / den[v]));
  return out;
}

}  // namespace voxdiff
