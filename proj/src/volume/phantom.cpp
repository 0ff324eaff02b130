#include <algorithm>
#include <cmath>
#include <sstream>

#include "voxdiff/volume.hpp"

namespace voxdiff {

namespace {

// Separable Gaussian blur with clamped borders.
void blur(std::vector<double>& field, const Extent3& ext, double sigma) {
  if (sigma <= 0.0) return;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;

  const std::array<std::size_t, 3> stride{ext[1] * ext[2], ext[2], 1};
  std::vector<double> tmp(field.size());
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const auto len = static_cast<std::ptrdiff_t>(ext[axis]);
    for (std::size_t x = 0; x < ext[0]; ++x)
      for (std::size_t y = 0; y < ext[1]; ++y)
        for (std::size_t z = 0; z < ext[2]; ++z) {
          const std::size_t base = x * stride[0] + y * stride[1] + z;
          const std::array<std::size_t, 3> pos{x, y, z};
          const auto p = static_cast<std::ptrdiff_t>(pos[axis]);
          double acc = 0.0;
          for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
            const std::ptrdiff_t q = std::clamp<std::ptrdiff_t>(p + i, 0, len - 1);
            acc += kernel[i + radius] * field[base + (q - p) * static_cast<std::ptrdiff_t>(stride[axis])];
          }
          tmp[base] = acc;
        }
    field.swap(tmp);
  }
}

}  // namespace

void PhantomSpec::validate() const {
  for (auto e : extents) {
    if (e < 16) throw std::invalid_argument("phantom: every extent must be at least 16");
  }
  for (double s : spacing) {
    if (!(s > 0.0)) throw std::invalid_argument("phantom: spacing must be positive");
  }
  if (blobs_min > blobs_max) throw std::invalid_argument("phantom: blobs_min exceeds blobs_max");
  if (!(sigma_min > 0.0) || sigma_min > sigma_max) throw std::invalid_argument("phantom: need 0 < sigma_min <= sigma_max");
  if (!(air_threshold >= 0.0 && air_threshold < bone_threshold && bone_threshold <= 1.0)) {
    throw std::invalid_argument("phantom: need 0 <= air_threshold < bone_threshold <= 1");
  }
  if (smoothing < 0.0) throw std::invalid_argument("phantom: smoothing must be nonnegative");
}

std::string PhantomSpec::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "seed = " << seed << '\n';
  os << "extents = " << extents[0] << 'x' << extents[1] << 'x' << extents[2] << '\n';
  os << "spacing = " << spacing[0] << 'x' << spacing[1] << 'x' << spacing[2] << '\n';
  os << "blobs_min = " << blobs_min << '\n';
  os << "blobs_max = " << blobs_max << '\n';
  os << "sigma_min = " << sigma_min << '\n';
  os << "sigma_max = " << sigma_max << '\n';
  os << "air_threshold = " << air_threshold << '\n';
  os << "bone_threshold = " << bone_threshold << '\n';
  os << "smoothing = " << smoothing << '\n';
  return os.str();
}

PhantomSpec parse_phantom_spec(std::string_view text) {
  PhantomSpec s;
  for (const auto& [key, value] : io::parse_key_values(text)) {
    if (key == "seed") {
      s.seed = io::parse_unsigned(key, value);
    } else if (key == "extents") {
      const auto t = io::parse_triple(key, value);
      s.extents = {t[0], t[1], t[2]};
    } else if (key == "spacing") {
      const auto t = io::parse_number_triple(key, value);
      s.spacing = {t[0], t[1], t[2]};
    } else if (key == "blobs_min") {
      s.blobs_min = io::parse_unsigned(key, value);
    } else if (key == "blobs_max") {
      s.blobs_max = io::parse_unsigned(key, value);
    } else if (key == "sigma_min") {
      s.sigma_min = io::parse_number(key, value);
    } else if (key == "sigma_max") {
      s.sigma_max = io::parse_number(key, value);
    } else if (key == "air_threshold") {
      s.air_threshold = io::parse_number(key, value);
    } else if (key == "bone_threshold") {
      s.bone_threshold = io::parse_number(key, value);
    } else if (key == "smoothing") {
      s.smoothing = io::parse_number(key, value);
    } else {
      throw io::ParseError("phantom spec: unknown key '" + key + "'");
    }
  }
  s.validate();
  return s;
}

VolumePair synthesize_pair(const PhantomSpec& spec) {
  spec.validate();
  const auto& ext = spec.extents;
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> pick_count(spec.blobs_min, spec.blobs_max);
  const std::size_t blobs = pick_count(rng);

  struct Blob {
    std::array<double, 3> center;
    double sigma, amplitude;
  };
  std::vector<Blob> list(blobs);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& b : list) {
    for (std::size_t a = 0; a < 3; ++a) b.center[a] = unit(rng) * static_cast<double>(ext[a]);
    b.sigma = spec.sigma_min + (spec.sigma_max - spec.sigma_min) * unit(rng);
    b.amplitude = 2.0 * unit(rng) - 1.0;
  }

  std::vector<double> field(ext[0] * ext[1] * ext[2], 0.0);
  std::size_t i = 0;
  for (std::size_t x = 0; x < ext[0]; ++x)
    for (std::size_t y = 0; y < ext[1]; ++y)
      for (std::size_t z = 0; z < ext[2]; ++z, ++i) {
        double v = 0.0;
        for (const auto& b : list) {
          const double dx = static_cast<double>(x) - b.center[0];
          const double dy = static_cast<double>(y) - b.center[1];
          const double dz = static_cast<double>(z) - b.center[2];
          v += b.amplitude * std::exp(-0.5 * (dx * dx + dy * dy + dz * dz) / (b.sigma * b.sigma));
        }
        field[i] = v;
      }

  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  const double a = *lo, b = *hi;
  VolumePair pair{Volume(ext, Space::Normalized), Volume(ext, Space::HU)};
  pair.mr.spacing = pair.ct.spacing = spec.spacing;
  std::vector<double> ct(field.size());
  for (std::size_t k = 0; k < field.size(); ++k) {
    const double m = b > a ? 2.0 * (field[k] - a) / (b - a) - 1.0 : 0.0;
    pair.mr.values[k] = static_cast<float>(m);
    const double u = 0.5 * (static_cast<double>(pair.mr.values[k]) + 1.0);
    ct[k] = u < spec.air_threshold ? kAirHu : (u < spec.bone_threshold ? kSoftHu : kBoneHu);
  }
  blur(ct, ext, spec.smoothing);
  for (std::size_t k = 0; k < ct.size(); ++k) pair.ct.values[k] = static_cast<float>(std::clamp(ct[k], kHuMin, kHuMax));
  return pair;
}

}  // namespace voxdiff
