#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "voxdiff/diffusion.hpp"
#include "voxdiff/io.hpp"
#include "voxdiff/window.hpp"

namespace voxdiff {

inline constexpr double kHuMin = -1024.0;
inline constexpr double kHuMax = 1650.0;

enum class Space : std::uint32_t { HU = 0, Normalized = 1 };

// 3D scalar field, axis L fastest.
struct Volume {
  Extent3 extents{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  Space space = Space::HU;
  std::vector<float> values;

  Volume() = default;
  Volume(const Extent3& e, Space s, float fill = 0.0f);

  std::size_t size() const { return values.size(); }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (x * extents[1] + y) * extents[2] + z;
  }
  float at(std::size_t x, std::size_t y, std::size_t z) const { return values[index(x, y, z)]; }
  std::vector<double> as_double() const { return {values.begin(), values.end()}; }
};

class VolumeFormatError : public io::IoError {
 public:
  using io::IoError::IoError;
};
class VolumeExtentError : public io::IoError {
 public:
  using io::IoError::IoError;
};

// "VXVOL\0\0\0", u32 version, u32 extents[3], f64 spacing[3], u32 space, f32 values.
std::string encode_volume(const Volume& v);
Volume decode_volume(std::string_view bytes);
void save_volume(const std::filesystem::path& path, const Volume& v);
Volume load_volume(const std::filesystem::path& path);

// HU -> [-1, 1] over the clip range; the inverse clamps to [-1, 1] first.
double normalize_hu(double hu);
double denormalize_hu(double x);
Volume normalize_ct(const Volume& hu);
Volume denormalize_ct(const Volume& normalized);
// Per-volume min-max to [-1, 1]; rejects constant volumes.
Volume normalize_mr(const Volume& v);

struct PhantomSpec {
  std::uint64_t seed = 1;
  Extent3 extents{24, 24, 16};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::size_t blobs_min = 4;
  std::size_t blobs_max = 8;
  double sigma_min = 2.0;  // blob widths, voxels
  double sigma_max = 5.0;
  double air_threshold = 0.2;  // on the MR field mapped to [0, 1]
  double bone_threshold = 0.6;
  double smoothing = 1.0;  // Gaussian blur sigma of the CT, voxels

  void validate() const;
  std::string to_text() const;
};

inline constexpr double kAirHu = -1000.0;
inline constexpr double kSoftHu = 40.0;
inline constexpr double kBoneHu = 700.0;

// key = value lines; '#' starts a comment. extents and spacing take "HxWxL".
PhantomSpec parse_phantom_spec(std::string_view text);

struct VolumePair {
  Volume mr;  // normalized
  Volume ct;  // HU
};

VolumePair synthesize_pair(const PhantomSpec& spec);

struct PatchPair {
  Extent3 corner{0, 0, 0};
  std::vector<double> mr;
  std::vector<double> ct;
};

std::vector<double> crop(const Volume& v, const Extent3& corner, const Extent3& extents);

// Corners uniform over every position where the patch fits.
std::vector<PatchPair> extract_patches(const Volume& mr, const Volume& ct, const Extent3& patch, std::size_t count,
                                       std::mt19937_64& rng);

// Window starts along one axis: stride patch/2, last window flush with the edge.
std::vector<std::size_t> window_starts(std::size_t extent, std::size_t patch);

// Separable Gaussian weight over a patch, sigma = extent/8 per axis, floored at 1e-3.
std::vector<double> window_weight(const Extent3& patch);

// Seed of the rng for Monte Carlo run `run` of window `window`.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t window, std::uint64_t run);

struct InferenceOptions {
  Extent3 patch{16, 16, 4};
  std::size_t runs = 5;
  std::size_t first_run = 0;  // runs use indices first_run .. first_run + runs - 1
  std::uint64_t seed = 0;
  // Called after each window with (index, total, seconds).
  std::function<void(std::size_t, std::size_t, double)> on_window;
};

// Gaussian-weighted blend of per-window Monte Carlo generations; returns HU.
Volume sliding_window_infer(const Volume& mr, const NoisePredictor& predictor, const ResampledSteps& resampled,
                            const InferenceOptions& options);

}  // namespace voxdiff
